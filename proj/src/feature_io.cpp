#include "clip_ae/feature_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <set>

namespace clip_ae {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "feature files assume a little-endian host");

std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::audio: return "audio";
    case Modality::cbp: return "cbp";
    case Modality::vlp: return "vlp";
  }
  return "unknown";
}

void FeatureSequence::validate() const {
  require(data.rows() >= 1 && data.cols() >= 1, ErrorCode::DimensionZero,
          "feature sequence '" + video_id + "' has shape " + shape_str(data));
  require(segment_duration_s > 0.0 && std::isfinite(segment_duration_s), ErrorCode::InvalidArgument,
          "segment_duration_s must be positive");
  for (Index r = 0; r < data.rows(); ++r)
    for (Index c = 0; c < data.cols(); ++c)
      require(std::isfinite(data(r, c)), ErrorCode::NonFiniteValue,
              "entry (" + std::to_string(r) + ", " + std::to_string(c) + ") of '" + video_id + "'");
}

const Matrix& VideoFeatures::get(Modality m) const {
  switch (m) {
    case Modality::audio: return audio;
    case Modality::cbp: return cbp;
    case Modality::vlp: return vlp;
  }
  return cbp;
}

Matrix& VideoFeatures::get(Modality m) {
  return const_cast<Matrix&>(std::as_const(*this).get(m));
}

std::vector<GroundTruthSegment> Dataset::ground_truth() const {
  std::vector<GroundTruthSegment> out;
  for (const auto& e : manifest.entries)
    if (e.ground_truth) out.insert(out.end(), e.ground_truth->begin(), e.ground_truth->end());
  return out;
}

bool Dataset::has_ground_truth() const {
  return !manifest.entries.empty() &&
         std::all_of(manifest.entries.begin(), manifest.entries.end(),
                     [](const ManifestEntry& e) { return e.ground_truth.has_value(); });
}

namespace {

std::uint32_t read_u32(const std::vector<char>& bytes, std::size_t offset) {
  std::uint32_t v;
  std::memcpy(&v, bytes.data() + offset, sizeof v);
  return v;
}

void append_u32(std::string& out, std::uint32_t v) {
  char buf[4];
  std::memcpy(buf, &v, 4);
  out.append(buf, 4);
}

}  // namespace

FeatureSequence read_feature_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::MissingFile, path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  const std::string where = path.string();
  require(bytes.size() >= 4, ErrorCode::TruncatedFile, where + " ends at byte " + std::to_string(bytes.size()) + " inside magic");
  require(std::equal(kFeatureMagic.begin(), kFeatureMagic.end(), bytes.begin()), ErrorCode::MagicMismatch,
          where + " at byte offset 0");
  require(bytes.size() >= kFeatureHeaderBytes, ErrorCode::TruncatedFile,
          where + " ends at byte " + std::to_string(bytes.size()) + " inside header");

  const auto version = read_u32(bytes, 4);
  require(version == kFeatureVersion, ErrorCode::UnsupportedVersion,
          where + " version " + std::to_string(version) + " at byte offset 4");
  const auto rows = read_u32(bytes, 8);
  const auto cols = read_u32(bytes, 12);
  require(rows >= 1, ErrorCode::DimensionZero, where + " T=0 at byte offset 8");
  require(cols >= 1, ErrorCode::DimensionZero, where + " d=0 at byte offset 12");

  const std::size_t count = std::size_t{rows} * cols;
  const std::size_t expected = kFeatureHeaderBytes + count * sizeof(float);
  require(bytes.size() >= expected, ErrorCode::TruncatedFile,
          where + " ends at byte " + std::to_string(bytes.size()) + ", payload needs " + std::to_string(expected));
  require(bytes.size() == expected, ErrorCode::TrailingData,
          where + " has " + std::to_string(bytes.size() - expected) + " bytes after payload at offset " +
              std::to_string(expected));

  FeatureSequence seq;
  seq.video_id = path.stem().string();
  seq.data.resize(rows, cols);
  for (std::size_t k = 0; k < count; ++k) {
    float v;
    std::memcpy(&v, bytes.data() + kFeatureHeaderBytes + k * sizeof(float), sizeof v);
    require(std::isfinite(v), ErrorCode::NonFiniteValue,
            where + " value index " + std::to_string(k) + " at byte offset " +
                std::to_string(kFeatureHeaderBytes + k * sizeof(float)));
    seq.data(static_cast<Index>(k / cols), static_cast<Index>(k % cols)) = v;
  }
  return seq;
}

void write_feature_file(const FeatureSequence& seq, const fs::path& path) {
  seq.validate();
  std::string out;
  out.reserve(kFeatureHeaderBytes + static_cast<std::size_t>(seq.data.size()) * sizeof(float));
  out.append(kFeatureMagic.data(), kFeatureMagic.size());
  append_u32(out, kFeatureVersion);
  append_u32(out, static_cast<std::uint32_t>(seq.data.rows()));
  append_u32(out, static_cast<std::uint32_t>(seq.data.cols()));
  for (Index r = 0; r < seq.data.rows(); ++r) {
    for (Index c = 0; c < seq.data.cols(); ++c) {
      const auto v = static_cast<float>(seq.data(r, c));
      char buf[4];
      std::memcpy(buf, &v, 4);
      out.append(buf, 4);
    }
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  require(file.good(), ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  file.close();
  require(!file.fail(), ErrorCode::IoFailure, "write failed for " + path.string());
}

namespace {

void schema_check(bool ok, const std::string& what) { require(ok, ErrorCode::SchemaError, what); }

void reject_unknown_keys(const json& obj, std::initializer_list<std::string_view> allowed, const std::string& where) {
  for (const auto& [key, _] : obj.items()) {
    const bool known = std::find(allowed.begin(), allowed.end(), key) != allowed.end();
    schema_check(known, "unknown key '" + key + "' in " + where);
  }
}

ManifestEntry parse_entry(const json& v, std::size_t index, int num_classes) {
  const std::string where = "videos[" + std::to_string(index) + "]";
  schema_check(v.is_object(), where + " must be an object");
  reject_unknown_keys(v, {"id", "features", "segment_duration_s", "ground_truth"}, where);
  schema_check(v.contains("id") && v["id"].is_string(), where + ".id must be a string");
  schema_check(v.contains("features") && v["features"].is_object(), where + ".features must be an object");
  schema_check(v.contains("segment_duration_s") && v["segment_duration_s"].is_number(),
               where + ".segment_duration_s must be a number");

  ManifestEntry e;
  e.video_id = v["id"].get<std::string>();
  schema_check(!e.video_id.empty(), where + ".id must be non-empty");
  e.segment_duration_s = v["segment_duration_s"].get<double>();
  schema_check(e.segment_duration_s > 0.0 && std::isfinite(e.segment_duration_s),
               where + ".segment_duration_s must be positive");

  const auto& feats = v["features"];
  reject_unknown_keys(feats, {"audio", "cbp", "vlp"}, where + ".features");
  for (auto m : kModalities) {
    const std::string key(to_string(m));
    schema_check(feats.contains(key) && feats[key].is_string(), where + ".features." + key + " must be a path string");
    e.feature_paths[static_cast<int>(m)] = feats[key].get<std::string>();
  }

  if (v.contains("ground_truth")) {
    const auto& gts = v["ground_truth"];
    schema_check(gts.is_array(), where + ".ground_truth must be an array");
    std::vector<GroundTruthSegment> segs;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const auto& s = gts[g];
      const std::string gw = where + ".ground_truth[" + std::to_string(g) + "]";
      schema_check(s.is_object(), gw + " must be an object");
      reject_unknown_keys(s, {"class", "start", "end"}, gw);
      schema_check(s.contains("class") && s["class"].is_number_integer(), gw + ".class must be an integer");
      schema_check(s.contains("start") && s["start"].is_number(), gw + ".start must be a number");
      schema_check(s.contains("end") && s["end"].is_number(), gw + ".end must be a number");
      GroundTruthSegment seg{e.video_id, s["class"].get<int>(), s["start"].get<double>(), s["end"].get<double>()};
      schema_check(seg.class_index >= 0 && seg.class_index < num_classes,
                   gw + ".class out of range [0, " + std::to_string(num_classes) + ")");
      schema_check(std::isfinite(seg.start_s) && std::isfinite(seg.end_s) && 0.0 <= seg.start_s &&
                       seg.start_s < seg.end_s,
                   gw + " requires 0 <= start < end");
      segs.push_back(seg);
    }
    e.ground_truth = std::move(segs);
  }
  return e;
}

}  // namespace

Dataset load_manifest(const fs::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::MissingFile, path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::SchemaError, path.string() + ": " + e.what());
  }

  schema_check(doc.is_object(), "manifest root must be an object");
  reject_unknown_keys(doc, {"num_classes", "class_names", "videos"}, "manifest");
  schema_check(doc.contains("num_classes") && doc["num_classes"].is_number_integer(), "num_classes must be an integer");
  schema_check(doc.contains("videos") && doc["videos"].is_array(), "videos must be an array");

  Dataset ds;
  ds.manifest.num_classes = doc["num_classes"].get<int>();
  schema_check(ds.manifest.num_classes >= 2, "num_classes must be >= 2");
  if (doc.contains("class_names")) {
    const auto& names = doc["class_names"];
    schema_check(names.is_array() && names.size() == static_cast<std::size_t>(ds.manifest.num_classes),
                 "class_names must list num_classes strings");
    for (const auto& n : names) {
      schema_check(n.is_string(), "class_names entries must be strings");
      ds.manifest.class_names.push_back(n.get<std::string>());
    }
  }

  const fs::path base = path.parent_path();
  std::set<std::string> seen;
  const auto& videos = doc["videos"];
  for (std::size_t i = 0; i < videos.size(); ++i) {
    ManifestEntry entry = parse_entry(videos[i], i, ds.manifest.num_classes);
    schema_check(seen.insert(entry.video_id).second, "duplicate video id '" + entry.video_id + "'");

    VideoFeatures vf;
    vf.video_id = entry.video_id;
    vf.segment_duration_s = entry.segment_duration_s;
    for (auto m : kModalities) {
      fs::path p = entry.feature_paths[static_cast<int>(m)];
      if (p.is_relative()) p = base / p;
      require(fs::exists(p), ErrorCode::MissingFile, p.string());
      vf.get(m) = read_feature_file(p).data;
    }
    if (vf.audio.rows() != vf.cbp.rows() || vf.vlp.rows() != vf.cbp.rows())
      fail(ErrorCode::LengthMismatch, entry.video_id + ": audio T=" + std::to_string(vf.audio.rows()) +
                                          ", cbp T=" + std::to_string(vf.cbp.rows()) +
                                          ", vlp T=" + std::to_string(vf.vlp.rows()));
    ds.manifest.entries.push_back(std::move(entry));
    ds.videos.push_back(std::move(vf));
  }
  return ds;
}

void write_manifest(const DatasetManifest& manifest, const fs::path& path) {
  json doc;
  doc["num_classes"] = manifest.num_classes;
  if (!manifest.class_names.empty()) doc["class_names"] = manifest.class_names;
  doc["videos"] = json::array();
  for (const auto& e : manifest.entries) {
    json v;
    v["id"] = e.video_id;
    v["segment_duration_s"] = e.segment_duration_s;
    for (auto m : kModalities)
      v["features"][std::string(to_string(m))] = e.feature_paths[static_cast<int>(m)].generic_string();
    if (e.ground_truth) {
      v["ground_truth"] = json::array();
      for (const auto& g : *e.ground_truth)
        v["ground_truth"].push_back({{"class", g.class_index}, {"start", g.start_s}, {"end", g.end_s}});
    }
    doc["videos"].push_back(std::move(v));
  }
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
  out << doc.dump(2) << '\n';
  out.close();
  require(!out.fail(), ErrorCode::IoFailure, "write failed for " + path.string());
}

namespace {

Matrix gaussian(Index rows, Index cols, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = dist(rng);
  return m;
}

Matrix random_orthogonal(Index n, std::mt19937_64& rng) {
  Eigen::HouseholderQR<Matrix> qr(gaussian(n, n, rng, 1.0));
  return qr.householderQ() * Matrix::Identity(n, n);
}

// K prototypes (rows) with pairwise distance >= separation.
Matrix class_prototypes(int k, int dim, double separation, std::mt19937_64& rng) {
  if (k <= dim) {
    // Orthonormal directions scaled so that every pair sits exactly `separation` apart.
    Matrix basis = random_orthogonal(dim, rng).topRows(k);
    return basis * (separation / std::sqrt(2.0));
  }
  Matrix protos = gaussian(k, dim, rng, 1.0);
  double min_dist = std::numeric_limits<double>::infinity();
  for (int a = 0; a < k; ++a)
    for (int b = a + 1; b < k; ++b) min_dist = std::min(min_dist, (protos.row(a) - protos.row(b)).norm());
  return protos * (separation / std::max(min_dist, 1e-12));
}

Matrix to_float_precision(Matrix m) {
  return m.unaryExpr([](double v) { return static_cast<double>(static_cast<float>(v)); });
}

}  // namespace

Dataset generate_synthetic(const SynthOptions& o) {
  require(o.num_videos >= 1, ErrorCode::InvalidArgument, "num_videos must be >= 1");
  require(o.num_classes >= 2, ErrorCode::InvalidArgument, "num_classes must be >= 2");
  require(o.frames >= 1, ErrorCode::InvalidArgument, "frames must be >= 1");
  require(o.dim >= 1, ErrorCode::InvalidArgument, "dim must be >= 1");
  require(o.noise_std > 0.0 && o.view_noise_std >= 0.0 && o.segment_duration_s > 0.0, ErrorCode::InvalidArgument,
          "noise and duration parameters must be positive");

  std::mt19937_64 rng(o.seed);
  const Matrix prototypes = class_prototypes(o.num_classes, o.dim, o.prototype_separation * o.noise_std, rng);
  std::array<Matrix, 3> projections;
  for (auto& p : projections) p = random_orthogonal(o.dim, rng);

  std::vector<int> classes(static_cast<std::size_t>(o.num_videos));
  for (int i = 0; i < o.num_videos; ++i) classes[static_cast<std::size_t>(i)] = i % o.num_classes;
  std::shuffle(classes.begin(), classes.end(), rng);

  const int min_len = std::max(1, static_cast<int>(std::ceil(0.2 * o.frames)));
  const int max_len = std::max(min_len, static_cast<int>(std::floor(0.6 * o.frames)));

  Dataset ds;
  ds.manifest.num_classes = o.num_classes;
  for (int i = 0; i < o.num_videos; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "vid_%04d", i);
    const int cls = classes[static_cast<std::size_t>(i)];

    const int len = std::uniform_int_distribution<int>(min_len, max_len)(rng);
    const int start = std::uniform_int_distribution<int>(0, o.frames - len)(rng);

    Matrix latent = gaussian(o.frames, o.dim, rng, o.noise_std);
    for (int t = start; t < start + len; ++t) latent.row(t) += prototypes.row(cls);

    VideoFeatures vf;
    vf.video_id = id;
    vf.segment_duration_s = o.segment_duration_s;
    for (auto m : kModalities) {
      const auto mi = static_cast<std::size_t>(m);
      vf.get(m) = to_float_precision(latent * projections[mi] + gaussian(o.frames, o.dim, rng, o.view_noise_std));
    }

    ManifestEntry e;
    e.video_id = id;
    e.segment_duration_s = o.segment_duration_s;
    for (auto m : kModalities)
      e.feature_paths[static_cast<int>(m)] =
          fs::path("features") / (std::string(id) + "_" + std::string(to_string(m)) + ".cafe");
    e.ground_truth = std::vector<GroundTruthSegment>{
        {id, cls, start * o.segment_duration_s, (start + len) * o.segment_duration_s}};

    ds.manifest.entries.push_back(std::move(e));
    ds.videos.push_back(std::move(vf));
  }
  return ds;
}

Dataset synth_dataset(const SynthOptions& options, const fs::path& out_dir) {
  Dataset ds = generate_synthetic(options);
  std::error_code ec;
  fs::create_directories(out_dir / "features", ec);
  require(!ec, ErrorCode::IoFailure, "cannot create " + (out_dir / "features").string() + ": " + ec.message());
  for (std::size_t i = 0; i < ds.videos.size(); ++i) {
    for (auto m : kModalities) {
      FeatureSequence seq{ds.videos[i].video_id, m, ds.videos[i].get(m), ds.videos[i].segment_duration_s};
      write_feature_file(seq, out_dir / ds.manifest.entries[i].feature_paths[static_cast<int>(m)]);
    }
  }
  write_manifest(ds.manifest, out_dir / "manifest.json");
  return load_manifest(out_dir / "manifest.json");
}

}  // namespace clip_ae
