#include "clip_ae/caf_fusion.hpp"

#include "oracles.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace clip_ae;
using test_util::max_abs;
using test_util::random_matrix;

namespace {

FusionParams params_with(const Matrix& w, int stages) {
  std::mt19937_64 rng(0);
  auto p = init_fusion_params(w.rows(), w.rows(), w.rows(), stages, true, false, rng);
  p.weights[0] = w;
  return p;
}

Matrix column_mean_zero(Matrix x) {
  const Vector mean = x.rowwise().mean();
  x.colwise() -= mean;
  return x;
}

}  // namespace

TEST_CASE("encode_modality") {
  std::mt19937_64 rng(1);
  const Matrix raw = random_matrix(4, 3, rng);

  SUBCASE("identity encoder with zero bias transposes") {
    AffineMap enc{Matrix::Identity(3, 3), Vector::Zero(3)};
    CHECK(max_abs(encode_modality(raw, enc), raw.transpose()) == 0.0);
  }
  SUBCASE("zero weight gives the bias in every column") {
    Vector b(2);
    b << 0.5, -2.0;
    AffineMap enc{Matrix::Zero(2, 3), b};
    const Matrix out = encode_modality(raw, enc);
    REQUIRE(out.cols() == 4);
    for (Index l = 0; l < 4; ++l) CHECK(max_abs(out.col(l), b) == 0.0);
  }
  SUBCASE("random encoder matches per-element dot products") {
    const auto enc = init_affine(3, 5, rng);
    AffineMap biased = enc;
    biased.bias = random_matrix(5, 1, rng);
    const Matrix out = encode_modality(raw, biased);
    for (Index k = 0; k < 5; ++k)
      for (Index l = 0; l < 4; ++l) {
        double s = biased.bias(k);
        for (Index i = 0; i < 3; ++i) s += biased.weight(k, i) * raw(l, i);
        CHECK(std::abs(out(k, l) - s) < 1e-12);
      }
  }
  SUBCASE("tanh variant") {
    const auto enc = init_affine(3, 2, rng);
    CHECK(max_abs(encode_modality(raw, enc, true), encode_modality(raw, enc).array().tanh().matrix()) < 1e-15);
  }
  SUBCASE("dimension mismatch") {
    const auto enc = init_affine(4, 2, rng);
    CHECK_THROWS_CODE(encode_modality(raw, enc), ErrorCode::DimensionMismatch);
  }
}

TEST_CASE("init_affine uses fan-in bounds and zero bias") {
  std::mt19937_64 rng(3);
  const auto enc = init_affine(16, 8, rng);
  CHECK(enc.weight.rows() == 8);
  CHECK(enc.weight.cols() == 16);
  CHECK(enc.weight.cwiseAbs().maxCoeff() <= 0.25);
  CHECK(enc.bias.isZero(0.0));
  std::mt19937_64 again(3);
  CHECK(init_affine(16, 8, again).weight == enc.weight);
}

TEST_CASE("cross_correlation") {
  SUBCASE("identity inputs and identity W") {
    const Matrix eye = Matrix::Identity(2, 2);
    CHECK(max_abs(cross_correlation(eye, eye, eye), eye) == 0.0);
  }
  SUBCASE("zero W gives zero") {
    std::mt19937_64 rng(5);
    const Matrix lam = cross_correlation(random_matrix(3, 4, rng), random_matrix(3, 4, rng), Matrix::Zero(3, 3));
    CHECK(lam.isZero(0.0));
  }
  SUBCASE("seeded d=3, L=4 matches the triple loop") {
    std::mt19937_64 rng(6);
    const Matrix a = random_matrix(3, 4, rng), c = random_matrix(3, 4, rng), w = random_matrix(3, 3, rng);
    const Matrix lam = cross_correlation(a, c, w);
    for (Index i = 0; i < 4; ++i)
      for (Index j = 0; j < 4; ++j) {
        double s = 0.0;
        for (Index p = 0; p < 3; ++p)
          for (Index q = 0; q < 3; ++q) s += a(p, i) / a.col(i).norm() * w(p, q) * c(q, j) / c.col(j).norm();
        CHECK(std::abs(lam(i, j) - s) < 1e-12);
      }
  }
  SUBCASE("zero-norm column") {
    Matrix a = Matrix::Ones(3, 4);
    a.col(2).setZero();
    CHECK_THROWS_CODE(cross_correlation(a, Matrix::Ones(3, 4), Matrix::Identity(3, 3)), ErrorCode::ZeroNormColumn);
    CHECK_THROWS_CODE(cross_correlation(Matrix::Ones(3, 4), a, Matrix::Identity(3, 3)), ErrorCode::ZeroNormColumn);
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_CODE(cross_correlation(Matrix::Ones(3, 4), Matrix::Ones(3, 5), Matrix::Identity(3, 3)),
                      ErrorCode::DimensionMismatch);
    CHECK_THROWS_CODE(cross_correlation(Matrix::Ones(3, 4), Matrix::Ones(3, 4), Matrix::Identity(2, 2)),
                      ErrorCode::DimensionMismatch);
  }
}

TEST_CASE("attention_weights") {
  SUBCASE("zero logits are uniform") {
    const auto att = attention_weights(Matrix::Zero(3, 3));
    CHECK(max_abs(att.audio, Matrix::Constant(3, 3, 1.0 / 3.0)) < 1e-15);
    CHECK(max_abs(att.cbp, Matrix::Constant(3, 3, 1.0 / 3.0)) < 1e-15);
  }
  SUBCASE("100 * identity is nearly the identity") {
    const auto att = attention_weights(100.0 * Matrix::Identity(2, 2));
    CHECK(att.audio(0, 1) < 1e-8);
    CHECK(att.audio(1, 0) < 1e-8);
    CHECK(std::abs(att.audio(0, 0) - 1.0) < 1e-8);
  }
  SUBCASE("axes: audio softmaxes columns of lambda, cbp columns of its transpose") {
    std::mt19937_64 rng(8);
    const Matrix lam = random_matrix(4, 4, rng, 2.0);
    const auto att = attention_weights(lam);
    for (Index j = 0; j < 4; ++j) {
      double za = 0.0, zc = 0.0;
      for (Index i = 0; i < 4; ++i) {
        za += std::exp(lam(i, j));
        zc += std::exp(lam(j, i));
      }
      for (Index i = 0; i < 4; ++i) {
        CHECK(std::abs(att.audio(i, j) - std::exp(lam(i, j)) / za) < 1e-14);
        CHECK(std::abs(att.cbp(i, j) - std::exp(lam(j, i)) / zc) < 1e-14);
      }
    }
  }
  SUBCASE("huge logits stay finite") {
    const auto att = attention_weights(1e4 * Matrix::Identity(3, 3));
    CHECK(att.audio.allFinite());
    CHECK(std::abs(att.audio(1, 1) - 1.0) < 1e-12);
  }
}

TEST_CASE("apply_attention") {
  std::mt19937_64 rng(10);
  const Matrix x = random_matrix(3, 5, rng);
  CHECK(max_abs(apply_attention(x, Matrix::Identity(5, 5)), x) == 0.0);
  const Matrix uniform = apply_attention(x, Matrix::Constant(5, 5, 0.2));
  for (Index l = 0; l < 5; ++l) CHECK(max_abs(uniform.col(l), x.rowwise().mean()) < 1e-15);

  const Matrix a = column_softmax(random_matrix(5, 5, rng));
  const Matrix out = apply_attention(x, a);
  for (Index k = 0; k < 3; ++k)
    for (Index l = 0; l < 5; ++l) {
      double s = 0.0;
      for (Index i = 0; i < 5; ++i) s += x(k, i) * a(i, l);
      CHECK(std::abs(out(k, l) - s) < 1e-12);
    }
  CHECK_THROWS_CODE(apply_attention(x, Matrix::Identity(4, 4)), ErrorCode::DimensionMismatch);
}

TEST_CASE("caf_forward") {
  SUBCASE("one stage with W=0 and column-mean-zero inputs is tanh of the input") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
      const Matrix a = column_mean_zero(random_matrix(4, 6, rng));
      const Matrix c = column_mean_zero(random_matrix(4, 6, rng));
      const auto r = caf_forward(a, c, params_with(Matrix::Zero(4, 4), 1));
      CHECK(max_abs(r.audio, a.array().tanh().matrix()) < 1e-15);
      CHECK(max_abs(r.cbp, c.array().tanh().matrix()) < 1e-15);
    }
  }
  SUBCASE("seeded d=4, L=5, two stages matches the straight-line oracle") {
    std::mt19937_64 rng(12);
    const Matrix a = random_matrix(4, 5, rng), c = random_matrix(4, 5, rng), w = random_matrix(4, 4, rng);
    const auto r = caf_forward(a, c, params_with(w, 2));
    const auto o = oracle::caf(oracle::from_matrix(a), oracle::from_matrix(c), oracle::from_matrix(w), 2);
    CHECK(oracle::max_abs_diff(o.audio, r.audio) < 1e-10);
    CHECK(oracle::max_abs_diff(o.cbp, r.cbp) < 1e-10);
  }
  SUBCASE("oracle agreement over shapes and stage counts") {
    std::mt19937_64 rng(13);
    std::uniform_int_distribution<int> dim(1, 6), len(1, 7), stages(1, 4);
    for (int trial = 0; trial < 60; ++trial) {
      const int d = dim(rng), l = len(rng), s = stages(rng);
      const Matrix a = random_matrix(d, l, rng), c = random_matrix(d, l, rng), w = random_matrix(d, d, rng);
      const auto r = caf_forward(a, c, params_with(w, s));
      const auto o = oracle::caf(oracle::from_matrix(a), oracle::from_matrix(c), oracle::from_matrix(w), s);
      REQUIRE(oracle::max_abs_diff(o.audio, r.audio) < 1e-10);
      REQUIRE(oracle::max_abs_diff(o.cbp, r.cbp) < 1e-10);
    }
  }
  SUBCASE("per-stage weights use W_t at stage t") {
    std::mt19937_64 rng(14);
    const Matrix a = random_matrix(3, 4, rng), c = random_matrix(3, 4, rng);
    auto p = init_fusion_params(3, 3, 3, 2, false, false, rng);
    p.weights[0] = random_matrix(3, 3, rng);
    p.weights[1] = Matrix::Zero(3, 3);
    const auto r = caf_forward(a, c, p);
    // Stage 2 with W=0 attends uniformly over the stage-1 output.
    const auto s1 = caf_forward(a, c, params_with(p.weights[0], 1));
    const Matrix expected = (a + s1.audio + s1.audio.rowwise().mean().replicate(1, 4)).array().tanh().matrix();
    CHECK(max_abs(r.audio, expected) < 1e-14);
  }
  SUBCASE("errors") {
    Matrix a = Matrix::Ones(3, 4);
    a(0, 1) = a(1, 1) = a(2, 1) = 0.0;
    CHECK_THROWS_CODE(caf_forward(a, Matrix::Ones(3, 4), params_with(Matrix::Identity(3, 3), 2)),
                      ErrorCode::ZeroNormColumn);
  }
}

TEST_CASE("caf properties") {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> dim(1, 6), len(1, 8);

  SUBCASE("attention columns sum to one") {
    for (int trial = 0; trial < 100; ++trial) {
      const int l = len(rng);
      const auto att = attention_weights(random_matrix(l, l, rng, 5.0));
      REQUIRE((att.audio.colwise().sum().array() - 1.0).abs().maxCoeff() < 1e-9);
      REQUIRE((att.cbp.colwise().sum().array() - 1.0).abs().maxCoeff() < 1e-9);
      REQUIRE(att.audio.minCoeff() >= 0.0);
    }
  }
  SUBCASE("lambda is invariant to positive column scaling") {
    for (int trial = 0; trial < 50; ++trial) {
      const int d = dim(rng), l = len(rng);
      const Matrix a = random_matrix(d, l, rng), c = random_matrix(d, l, rng), w = random_matrix(d, d, rng);
      Matrix scaled = a;
      std::uniform_real_distribution<double> factor(0.01, 100.0);
      for (Index j = 0; j < l; ++j) scaled.col(j) *= factor(rng);
      REQUIRE(max_abs(cross_correlation(a, c, w), cross_correlation(scaled, c, w)) < 1e-12);
    }
  }
  SUBCASE("permuting segments permutes lambda and the outputs") {
    for (int trial = 0; trial < 50; ++trial) {
      const int d = dim(rng), l = len(rng);
      const Matrix a = random_matrix(d, l, rng), c = random_matrix(d, l, rng), w = random_matrix(d, d, rng);
      std::vector<int> perm(static_cast<std::size_t>(l));
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      Matrix pa(d, l), pc(d, l);
      for (Index j = 0; j < l; ++j) {
        pa.col(j) = a.col(perm[static_cast<std::size_t>(j)]);
        pc.col(j) = c.col(perm[static_cast<std::size_t>(j)]);
      }
      const Matrix lam = cross_correlation(a, c, w), plam = cross_correlation(pa, pc, w);
      for (Index i = 0; i < l; ++i)
        for (Index j = 0; j < l; ++j)
          REQUIRE(std::abs(plam(i, j) - lam(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)])) <
                  1e-12);
      const auto r = caf_forward(a, c, params_with(w, 2));
      const auto pr = caf_forward(pa, pc, params_with(w, 2));
      for (Index j = 0; j < l; ++j) {
        REQUIRE(max_abs(pr.audio.col(j), r.audio.col(perm[static_cast<std::size_t>(j)])) < 1e-12);
        REQUIRE(max_abs(pr.cbp.col(j), r.cbp.col(perm[static_cast<std::size_t>(j)])) < 1e-12);
      }
    }
  }
  SUBCASE("outputs lie strictly inside (-1, 1)") {
    for (int trial = 0; trial < 50; ++trial) {
      const int d = dim(rng), l = len(rng);
      const auto r = caf_forward(random_matrix(d, l, rng, 3.0), random_matrix(d, l, rng, 3.0),
                                 params_with(random_matrix(d, d, rng), 3));
      REQUIRE(r.audio.cwiseAbs().maxCoeff() < 1.0);
      REQUIRE(r.cbp.cwiseAbs().maxCoeff() < 1.0);
    }
  }
}
