#include "clip_ae/serialization.hpp"

#include <cstdio>
#include <algorithm>
#include <fstream>

namespace clip_ae {

namespace {

void schema(bool ok, const std::string& what) { require(ok, ErrorCode::SchemaError, what); }

template <class T>
void read_opt(const Json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  const Json& v = obj.at(key);
  if constexpr (std::is_same_v<T, bool>) {
    schema(v.is_boolean(), where + "." + key + " must be a boolean");
  } else if constexpr (std::is_integral_v<T>) {
    schema(v.is_number_integer(), where + "." + key + " must be an integer");
  } else if constexpr (std::is_floating_point_v<T>) {
    schema(v.is_number(), where + "." + key + " must be a number");
  }
  out = v.get<T>();
}

void reject_unknown(const Json& obj, std::initializer_list<std::string_view> allowed, const std::string& where) {
  schema(obj.is_object(), where + " must be an object");
  for (const auto& [key, _] : obj.items())
    schema(std::find(allowed.begin(), allowed.end(), key) != allowed.end(), "unknown key '" + key + "' in " + where);
}

Json model_to_json(const ModelConfig& m, bool with_dims) {
  Json j{{"caf_enabled", m.caf_enabled}, {"ccp_enabled", m.ccp_enabled},
         {"fused_dim", m.fused_dim},     {"stages", m.stages},
         {"share_weights", m.share_weights}, {"encoder_tanh", m.encoder_tanh},
         {"key_dim", m.key_dim},         {"value_dim", m.value_dim},
         {"decor_normalize", m.decor_normalize}, {"tau", m.tau},
         {"decor_weight", m.decor_weight}, {"ins_dis_weight", m.ins_dis_weight},
         {"cls_weight", m.cls_weight}};
  if (with_dims) {
    j["audio_dim"] = m.audio_dim;
    j["cbp_dim"] = m.cbp_dim;
    j["vlp_dim"] = m.vlp_dim;
    j["num_classes"] = m.num_classes;
  }
  return j;
}

ModelConfig model_from_json(const Json& j, bool with_dims) {
  const std::string where = "model";
  if (with_dims) {
    reject_unknown(j, {"caf_enabled", "ccp_enabled", "fused_dim", "stages", "share_weights", "encoder_tanh",
                       "key_dim", "value_dim", "decor_normalize", "tau", "decor_weight", "ins_dis_weight",
                       "cls_weight", "audio_dim", "cbp_dim", "vlp_dim", "num_classes"},
                   where);
  } else {
    reject_unknown(j, {"caf_enabled", "ccp_enabled", "fused_dim", "stages", "share_weights", "encoder_tanh",
                       "key_dim", "value_dim", "decor_normalize", "tau", "decor_weight", "ins_dis_weight",
                       "cls_weight"},
                   where);
  }
  ModelConfig m;
  read_opt(j, "caf_enabled", m.caf_enabled, where);
  read_opt(j, "ccp_enabled", m.ccp_enabled, where);
  read_opt(j, "fused_dim", m.fused_dim, where);
  read_opt(j, "stages", m.stages, where);
  read_opt(j, "share_weights", m.share_weights, where);
  read_opt(j, "encoder_tanh", m.encoder_tanh, where);
  read_opt(j, "key_dim", m.key_dim, where);
  read_opt(j, "value_dim", m.value_dim, where);
  read_opt(j, "decor_normalize", m.decor_normalize, where);
  read_opt(j, "tau", m.tau, where);
  read_opt(j, "decor_weight", m.decor_weight, where);
  read_opt(j, "ins_dis_weight", m.ins_dis_weight, where);
  read_opt(j, "cls_weight", m.cls_weight, where);
  if (with_dims) {
    read_opt(j, "audio_dim", m.audio_dim, where);
    read_opt(j, "cbp_dim", m.cbp_dim, where);
    read_opt(j, "vlp_dim", m.vlp_dim, where);
    read_opt(j, "num_classes", m.num_classes, where);
  }
  return m;
}

std::string threshold_key(double t) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.2f", t);
  return buf;
}

Json labels_to_json(const PseudoLabels& l) { return Json{{"labels", l.labels}, {"confidence", l.confidence}}; }

PseudoLabels labels_from_json(const Json& j) {
  schema(j.is_object() && j.contains("labels") && j.contains("confidence"), "pseudo-label record");
  return PseudoLabels{j.at("labels").get<std::vector<int>>(), j.at("confidence").get<std::vector<double>>()};
}

}  // namespace

RunConfig parse_run_config(const Json& doc) {
  reject_unknown(doc, {"seed", "learning_rate", "momentum", "epochs", "batch_size", "num_clusters", "refresh_period",
                       "bank_momentum", "divergence_limit", "threads", "model", "localization"},
                 "config");
  RunConfig rc;
  TrainConfig& t = rc.train;
  read_opt(doc, "seed", t.seed, "config");
  read_opt(doc, "learning_rate", t.learning_rate, "config");
  read_opt(doc, "momentum", t.momentum, "config");
  read_opt(doc, "epochs", t.epochs, "config");
  read_opt(doc, "batch_size", t.batch_size, "config");
  read_opt(doc, "num_clusters", t.num_clusters, "config");
  read_opt(doc, "refresh_period", t.refresh_period, "config");
  read_opt(doc, "bank_momentum", t.bank_momentum, "config");
  read_opt(doc, "divergence_limit", t.divergence_limit, "config");
  read_opt(doc, "threads", t.threads, "config");
  if (doc.contains("model")) t.model = model_from_json(doc.at("model"), false);

  if (doc.contains("localization")) {
    const Json& l = doc.at("localization");
    reject_unknown(l, {"thresholds", "margin_fraction", "nms_iou", "classes_per_video"}, "localization");
    auto& o = rc.localization;
    if (l.contains("thresholds")) {
      schema(l.at("thresholds").is_array(), "localization.thresholds must be an array");
      o.thresholds = l.at("thresholds").get<std::vector<double>>();
    }
    read_opt(l, "margin_fraction", o.margin_fraction, "localization");
    read_opt(l, "nms_iou", o.nms_iou, "localization");
    read_opt(l, "classes_per_video", o.classes_per_video, "localization");
  }
  try {
    t.validate();
    rc.localization.validate();
  } catch (const Error& e) {
    fail(ErrorCode::SchemaError, e.what());
  }
  return rc;
}

RunConfig load_run_config(const std::filesystem::path& path) { return parse_run_config(read_json_file(path)); }

Json to_json(const RunConfig& c) {
  const TrainConfig& t = c.train;
  return Json{{"seed", t.seed},
              {"learning_rate", t.learning_rate},
              {"momentum", t.momentum},
              {"epochs", t.epochs},
              {"batch_size", t.batch_size},
              {"num_clusters", t.num_clusters},
              {"refresh_period", t.refresh_period},
              {"bank_momentum", t.bank_momentum},
              {"divergence_limit", t.divergence_limit},
              {"threads", t.threads},
              {"model", model_to_json(t.model, false)},
              {"localization",
               {{"thresholds", c.localization.thresholds},
                {"margin_fraction", c.localization.margin_fraction},
                {"nms_iou", c.localization.nms_iou},
                {"classes_per_video", c.localization.classes_per_video}}}};
}

Json matrix_to_json(const Matrix& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Matrix matrix_from_json(const Json& j, const std::string& what) {
  schema(j.is_object() && j.contains("rows") && j.contains("cols") && j.contains("data"), what + " must be a matrix");
  const auto rows = j.at("rows").get<Index>();
  const auto cols = j.at("cols").get<Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  schema(rows >= 0 && cols >= 0 && static_cast<Index>(data.size()) == rows * cols, what + " has inconsistent size");
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = data[static_cast<std::size_t>(r * cols + c)];
  return m;
}

Checkpoint make_checkpoint(const TrainResult& result, const RunConfig& config) {
  return Checkpoint{result.model_config, config,         result.params,      result.banks,
                    result.loss_history, result.label_history, result.final_labels};
}

Json to_json(const Checkpoint& ck) {
  Json params = Json::object();
  for_each_tensor(ck.params, [&](const std::string& name, const auto& t) { params[name] = matrix_to_json(t); });
  Json losses = Json::array();
  for (const auto& e : ck.loss_history)
    losses.push_back({{"epoch", e.epoch},
                      {"de_cor", e.ssl.de_cor},
                      {"ins_dis", e.ssl.ins_dis},
                      {"self", e.ssl.total},
                      {"cls", e.cls},
                      {"objective", e.objective}});
  Json labels = Json::array();
  for (const auto& l : ck.label_history) {
    Json rec = labels_to_json(l.labels);
    rec["epoch"] = l.epoch;
    labels.push_back(std::move(rec));
  }
  return Json{{"format", "clip-ae-checkpoint"},
              {"version", 1},
              {"model_config", model_to_json(ck.model_config, true)},
              {"run_config", to_json(ck.run_config)},
              {"params", params},
              {"banks",
               {{"momentum", ck.banks.cbp.momentum()},
                {"vlp", matrix_to_json(ck.banks.vlp.entries())},
                {"cbp", matrix_to_json(ck.banks.cbp.entries())}}},
              {"loss_history", losses},
              {"label_history", labels},
              {"final_labels", labels_to_json(ck.final_labels)}};
}

Checkpoint checkpoint_from_json(const Json& doc) {
  schema(doc.is_object() && doc.value("format", "") == "clip-ae-checkpoint", "not a clip-ae checkpoint");
  schema(doc.value("version", 0) == 1, "unsupported checkpoint version");
  Checkpoint ck;
  try {
    ck.model_config = model_from_json(doc.at("model_config"), true);
    ck.model_config.validate();
    ck.run_config = parse_run_config(doc.at("run_config"));
    ck.params = init_model(ck.model_config, 0);
    const Json& params = doc.at("params");
    for_each_tensor(ck.params, [&](const std::string& name, auto& t) {
      schema(params.contains(name), "checkpoint lacks parameter '" + name + "'");
      const Matrix m = matrix_from_json(params.at(name), name);
      schema(m.rows() == t.rows() && m.cols() == t.cols(),
             "parameter '" + name + "' has shape " + shape_str(m) + ", expected " + std::to_string(t.rows()) + "x" +
                 std::to_string(t.cols()));
      t = m;
    });
    const Json& banks = doc.at("banks");
    const double mu = banks.at("momentum").get<double>();
    ck.banks = MemoryBanks{MemoryBank::restore(matrix_from_json(banks.at("vlp"), "banks.vlp"), mu, "vlp"),
                           MemoryBank::restore(matrix_from_json(banks.at("cbp"), "banks.cbp"), mu, "cbp")};
    for (const auto& e : doc.at("loss_history")) {
      EpochRecord r;
      r.epoch = e.at("epoch").get<int>();
      r.ssl = total_loss(e.at("de_cor").get<double>(), e.at("ins_dis").get<double>());
      r.cls = e.at("cls").get<double>();
      r.objective = e.at("objective").get<double>();
      ck.loss_history.push_back(r);
    }
    for (const auto& l : doc.at("label_history")) ck.label_history.push_back({l.at("epoch").get<int>(), labels_from_json(l)});
    ck.final_labels = labels_from_json(doc.at("final_labels"));
  } catch (const Json::exception& e) {
    fail(ErrorCode::SchemaError, std::string("checkpoint: ") + e.what());
  }
  return ck;
}

Json proposals_to_json(std::span<const Proposal> proposals) {
  Json out = Json::array();
  for (const auto& p : proposals)
    out.push_back({{"video_id", p.video_id},
                   {"class", p.class_index},
                   {"start", p.start_s},
                   {"end", p.end_s},
                   {"score", p.score}});
  return out;
}

std::vector<Proposal> proposals_from_json(const Json& doc) {
  schema(doc.is_array(), "proposals must be a JSON array");
  std::vector<Proposal> out;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const Json& p = doc[i];
    const std::string where = "proposals[" + std::to_string(i) + "]";
    reject_unknown(p, {"video_id", "class", "start", "end", "score"}, where);
    schema(p.contains("video_id") && p["video_id"].is_string() && p.contains("class") &&
               p["class"].is_number_integer() && p.contains("start") && p["start"].is_number() &&
               p.contains("end") && p["end"].is_number() && p.contains("score") && p["score"].is_number(),
           where + " needs video_id, class, start, end, score");
    Proposal q{p["video_id"].get<std::string>(), p["class"].get<int>(), p["start"].get<double>(),
               p["end"].get<double>(), p["score"].get<double>()};
    schema(q.class_index >= 0 && 0.0 <= q.start_s && q.start_s < q.end_s, where + " violates 0 <= start < end");
    out.push_back(std::move(q));
  }
  return out;
}

Json tcams_to_json(std::span<const Tcam> tcams) {
  Json out = Json::array();
  for (const auto& t : tcams)
    out.push_back({{"video_id", t.video_id},
                   {"segment_duration_s", t.segment_duration_s},
                   {"scores", matrix_to_json(t.scores)}});
  return out;
}

Json to_json(const EvalReport& r) {
  Json map = Json::object(), map_pct = Json::object();
  for (std::size_t k = 0; k < r.thresholds.size(); ++k) {
    map[threshold_key(r.thresholds[k])] = r.map[k];
    map_pct[threshold_key(r.thresholds[k])] = 100.0 * r.map[k];
  }
  Json avg = Json::object(), avg_pct = Json::object();
  for (const auto& [name, v] : r.averages) {
    avg[name] = v;
    avg_pct[name] = 100.0 * v;
  }
  Json class_ap = Json::object();
  for (const auto& [c, aps] : r.class_ap) {
    Json per = Json::object();
    for (std::size_t k = 0; k < aps.size(); ++k) per[threshold_key(r.thresholds[k])] = aps[k];
    class_ap[std::to_string(c)] = per;
  }
  return Json{{"thresholds", r.thresholds}, {"map", map},       {"map_percent", map_pct},
              {"averages", avg},            {"averages_percent", avg_pct}, {"class_ap", class_ap}};
}

Json ablation_to_json(const std::vector<AblationRow>& rows) {
  Json out = Json::array();
  for (const auto& r : rows)
    out.push_back({{"name", r.name},
                   {"caf", r.caf_enabled},
                   {"ccp", r.ccp_enabled},
                   {"map", {{"0.50", r.map_050}, {"0.75", r.map_075}, {"0.95", r.map_095}, {"AVG", r.average}}},
                   {"map_percent",
                    {{"0.50", 100.0 * r.map_050},
                     {"0.75", 100.0 * r.map_075},
                     {"0.95", 100.0 * r.map_095},
                     {"AVG", 100.0 * r.average}}}});
  return Json{{"columns", {"0.50", "0.75", "0.95", "AVG"}}, {"rows", out}};
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::MissingFile, path.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    fail(ErrorCode::SchemaError, path.string() + ": " + e.what());
  }
}

void write_json_file(const Json& doc, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
  out << doc.dump(2) << '\n';
  out.close();
  require(!out.fail(), ErrorCode::IoFailure, "write failed for " + path.string());
}

}  // namespace clip_ae
