// Copyright 2026 The dtnlab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// of the License at http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS, WITHOUT
// WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dtnlab/core/error.hpp"
#include "dtnlab/fim/fim.hpp"
#include "dtnlab/fim/fim_modules.hpp"
#include "fd_check.hpp"

using namespace dtnlab;
using namespace dtnlab::fim;

namespace {

data::FeatureSchema tiny_schema() {
  std::vector<data::FeatureSpec> f(4);
  f[0] = {.name = "ca", .kind = data::FeatureKind::kCategorical, .vocab_size = 8,
          .embedding_dim = 2};
  f[1] = {.name = "cb", .kind = data::FeatureKind::kCategorical, .vocab_size = 8,
          .embedding_dim = 2};
  f[2].name = "xa";
  f[3].name = "xb";
  return data::FeatureSchema(f, {"t1", "t2"});
}

template <typename T>
Matrix<T> random_input(Rng& rng, std::size_t rows, std::size_t cols) {
  Matrix<T> m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(rng.normal());
  return m;
}

data::ExampleBatch random_batch(Rng& rng, const data::FeatureSchema& schema, std::size_t rows) {
  data::ExampleBatch b;
  b.categorical_ids.resize(rows, schema.n_categorical());
  b.continuous_values.resize(rows, schema.n_continuous());
  b.labels.resize(rows, schema.n_tasks());
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t cc = 0;
    for (const auto& f : schema.features()) {
      if (f.is_categorical()) {
        b.categorical_ids.at(r, cc++) = static_cast<std::int32_t>(1 + rng.below(f.vocab_size - 1));
      }
    }
    for (std::size_t c = 0; c < schema.n_continuous(); ++c)
      b.continuous_values.at(r, c) = static_cast<float>(rng.normal());
    for (std::size_t t = 0; t < schema.n_tasks(); ++t)
      b.labels.at(r, t) = static_cast<float>(rng.below(2));
  }
  return b;
}

template <typename T>
void set_block(ParamStore<T>& ps, std::size_t h, const std::vector<T>& vals) {
  auto& b = ps.block(h);
  REQUIRE(b.value.size() == vals.size());
  b.value = vals;
}

// Loss used by the per-kind gradient checks: mean of out .* direction.
template <typename T>
struct FimProbe {
  ParamStore<T>* ps;
  FimModule<T>* fim;
  FimInput<T> in;
  std::vector<T> direction;

  double loss() const {
    Matrix<T> out;
    fim->forward(*ps, in, out, nullptr);
    double total = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i)
      total += static_cast<double>(out.data()[i]) * static_cast<double>(direction[i]);
    return total / static_cast<double>(out.rows());
  }

  void backward() const {
    Matrix<T> out;
    FimCache<T> cache;
    fim->forward(*ps, in, out, &cache);
    Matrix<T> dout(out.rows(), out.cols());
    for (std::size_t i = 0; i < out.size(); ++i)
      dout.data()[i] = direction[i] / static_cast<T>(out.rows());
    fim->backward(*ps, cache, dout, nullptr);
  }
};

}  // namespace

TEST_CASE("x-consuming kinds reject width mismatches") {
  const auto schema = tiny_schema();
  Rng rng(99);
  for (auto kind : {FimKind::kMlp, FimKind::kGdcn, FimKind::kMasknet}) {
    FimSpec spec;
    spec.kind = kind;
    spec.output_dim = 3;
    ParamStore<float> ps;
    auto fim = build_fim(ps, "f", spec, 5, schema, rng);
    Matrix<float> wrong = random_input<float>(rng, 2, 4), out;
    CHECK_THROWS_WITH_AS(fim->forward(ps, {.x = &wrong}, out, nullptr),
                         doctest::Contains("width mismatch"), Error);
  }
}

TEST_CASE("mlp expert with zero weights maps everything to zero") {
  ParamStore<float> ps;
  Rng rng(1);
  FimSpec spec{.kind = FimKind::kMlp, .output_dim = 4, .mlp_hidden = {5}};
  auto fim = build_fim(ps, "e", spec, 3, tiny_schema(), rng);
  for (std::size_t h = 0; h < ps.n_blocks(); ++h)
    ps.block(h).value.assign(ps.block(h).value.size(), 0.0f);
  Matrix<float> x = random_input<float>(rng, 6, 3), out;
  fim->forward(ps, {.x = &x}, out, nullptr);
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out.data()[i] == 0.0f);
}

TEST_CASE("single identity-initialized mlp layer copies its input") {
  ParamStore<float> ps;
  Rng rng(2);
  FimSpec spec{.kind = FimKind::kMlp, .output_dim = 3, .mlp_hidden = {}};
  auto fim = build_fim(ps, "e", spec, 3, tiny_schema(), rng);
  std::vector<float> eye(9, 0.0f);
  eye[0] = eye[4] = eye[8] = 1.0f;
  set_block(ps, 0, eye);
  Matrix<float> x = random_input<float>(rng, 4, 3), out;
  fim->forward(ps, {.x = &x}, out, nullptr);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(out.data()[i] == x.data()[i]);
}

TEST_CASE("mlp forward matches independent arithmetic on a 2x3 example") {
  // x [1x2], hidden 3 with ReLU, output 1.
  ParamStore<double> ps;
  Rng rng(3);
  FimSpec spec{.kind = FimKind::kMlp, .output_dim = 1, .mlp_hidden = {3}};
  auto fim = build_fim(ps, "e", spec, 2, tiny_schema(), rng);
  // W1 [2x3], b1 [3], W2 [3x1], b2 [1]
  set_block<double>(ps, 0, {0.5, -1.0, 2.0, 1.5, 0.25, -0.75});
  set_block<double>(ps, 1, {0.1, -0.2, 0.3});
  set_block<double>(ps, 2, {1.0, -2.0, 0.5});
  set_block<double>(ps, 3, {0.05});
  Matrix<double> x(1, 2);
  x.at(0, 0) = 0.8;
  x.at(0, 1) = -0.4;
  Matrix<double> out;
  fim->forward(ps, {.x = &x}, out, nullptr);
  // hand arithmetic
  const double h0 = std::max(0.0, 0.8 * 0.5 + (-0.4) * 1.5 + 0.1);
  const double h1 = std::max(0.0, 0.8 * -1.0 + (-0.4) * 0.25 + -0.2);
  const double h2 = std::max(0.0, 0.8 * 2.0 + (-0.4) * -0.75 + 0.3);
  const double expected = h0 * 1.0 + h1 * -2.0 + h2 * 0.5 + 0.05;
  CHECK(out.at(0, 0) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("gdcn with zero cross weights reduces to a projection of x") {
  ParamStore<float> ps;
  Rng rng(4);
  FimSpec spec{.kind = FimKind::kGdcn, .output_dim = 2, .gdcn_layers = 2};
  auto fim = build_fim(ps, "g", spec, 3, tiny_schema(), rng);
  // zero every cross/gate weight+bias; keep the projection
  for (std::size_t h = 0; h + 2 < ps.n_blocks(); ++h)
    ps.block(h).value.assign(ps.block(h).value.size(), 0.0f);
  Matrix<float> x = random_input<float>(rng, 5, 3), out, expected;
  fim->forward(ps, {.x = &x}, out, nullptr);

  // c2 = c0 because u = 0 kills the multiplicative term at every layer
  ParamStore<float> ps2;
  Rng rng2(4);
  Linear<float> proj;
  proj.build(ps2, "p", 3, 2, rng2);
  ps2.block(0).value = ps.block(ps.n_blocks() - 2).value;
  ps2.block(1).value = ps.block(ps.n_blocks() - 1).value;
  proj.forward(ps2, x, expected);
  CHECK(out == expected);
}

TEST_CASE("a saturated gdcn gate turns the layer into the identity") {
  ParamStore<float> ps;
  Rng rng(5);
  FimSpec spec{.kind = FimKind::kGdcn, .output_dim = 3, .gdcn_layers = 1};
  auto fim = build_fim(ps, "g", spec, 3, tiny_schema(), rng);
  // blocks: cross.w, cross.b, gate.w, gate.b, proj.w, proj.b
  ps.block(2).value.assign(9, 0.0f);
  ps.block(3).value.assign(3, -40.0f);  // sigmoid(-40) == 0 in float
  std::vector<float> eye(9, 0.0f);
  eye[0] = eye[4] = eye[8] = 1.0f;
  set_block(ps, 4, eye);
  Matrix<float> x = random_input<float>(rng, 4, 3), out;
  fim->forward(ps, {.x = &x}, out, nullptr);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(out.data()[i] == x.data()[i]);
}

TEST_CASE("gdcn forward matches manual arithmetic on a 3-dim example") {
  ParamStore<double> ps;
  Rng rng(6);
  FimSpec spec{.kind = FimKind::kGdcn, .output_dim = 1, .gdcn_layers = 1};
  auto fim = build_fim(ps, "g", spec, 3, tiny_schema(), rng);
  const std::vector<double> wc{0.2, -0.1, 0.4, 0.3, 0.0, -0.2, 0.1, 0.5, 0.25};
  const std::vector<double> bc{0.05, -0.05, 0.1};
  const std::vector<double> wg{-0.3, 0.2, 0.1, 0.0, 0.4, -0.1, 0.2, -0.2, 0.3};
  const std::vector<double> bg{0.0, 0.1, -0.1};
  set_block(ps, 0, wc);
  set_block(ps, 1, bc);
  set_block(ps, 2, wg);
  set_block(ps, 3, bg);
  set_block<double>(ps, 4, {1.0, -1.0, 2.0});
  set_block<double>(ps, 5, {0.5});
  Matrix<double> x(1, 3);
  x.at(0, 0) = 0.6;
  x.at(0, 1) = -0.2;
  x.at(0, 2) = 1.1;
  Matrix<double> out;
  fim->forward(ps, {.x = &x}, out, nullptr);

  double u[3], g[3], c1[3];
  for (int j = 0; j < 3; ++j) {
    u[j] = bc[j];
    g[j] = bg[j];
    for (int i = 0; i < 3; ++i) {
      u[j] += x.at(0, i) * wc[i * 3 + j];
      g[j] += x.at(0, i) * wg[i * 3 + j];
    }
    g[j] = 1.0 / (1.0 + std::exp(-g[j]));
    c1[j] = x.at(0, j) * u[j] * g[j] + x.at(0, j);
  }
  const double expected = c1[0] * 1.0 + c1[1] * -1.0 + c1[2] * 2.0 + 0.5;
  CHECK(out.at(0, 0) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("masknet with an all-ones mask equals the plain LN path") {
  ParamStore<float> ps;
  Rng rng(7);
  FimSpec spec{.kind = FimKind::kMasknet, .output_dim = 4, .masknet_hidden = 6,
               .masknet_reduction = 2.0};
  auto fim = build_fim(ps, "m", spec, 5, tiny_schema(), rng);
  // blocks: mask1.w, mask1.b, mask2.w, mask2.b, hidden.w, hidden.b, ln.gain,
  // ln.bias, out.w, out.b
  ps.block(2).value.assign(ps.block(2).value.size(), 0.0f);
  ps.block(3).value.assign(ps.block(3).value.size(), 1.0f);  // mask == 1
  Matrix<float> x = random_input<float>(rng, 3, 5), out;
  fim->forward(ps, {.x = &x}, out, nullptr);

  // plain path: hidden -> LN -> relu -> out, reusing the same parameters
  Linear<float> hid{.w = 4, .b = 5, .in = 5, .out = 6};
  LayerNorm<float> ln{.gain = 6, .bias = 7, .dim = 6};
  Linear<float> head{.w = 8, .b = 9, .in = 6, .out = 4};
  Matrix<float> hidden, ln_out, act(3, 6), expected;
  hid.forward(ps, x, hidden);
  ln.forward(ps, hidden, ln_out, nullptr);
  kernels::relu(ln_out.data(), act.data(), ln_out.size());
  head.forward(ps, act, expected);
  CHECK(out == expected);
}

TEST_CASE("masknet with an all-zero mask emits only the output bias") {
  ParamStore<float> ps;
  Rng rng(8);
  FimSpec spec{.kind = FimKind::kMasknet, .output_dim = 3, .masknet_hidden = 6};
  auto fim = build_fim(ps, "m", spec, 4, tiny_schema(), rng);
  ps.block(2).value.assign(ps.block(2).value.size(), 0.0f);
  ps.block(3).value.assign(ps.block(3).value.size(), 0.0f);
  set_block<float>(ps, 9, {0.25f, -0.5f, 1.5f});
  Matrix<float> x = random_input<float>(rng, 2, 4), out;
  fim->forward(ps, {.x = &x}, out, nullptr);
  for (std::size_t r = 0; r < 2; ++r) {
    CHECK(out.at(r, 0) == 0.25f);
    CHECK(out.at(r, 1) == -0.5f);
    CHECK(out.at(r, 2) == 1.5f);
  }
}

TEST_CASE("masknet forward matches independent arithmetic") {
  ParamStore<double> ps;
  Rng rng(9);
  FimSpec spec{.kind = FimKind::kMasknet, .output_dim = 1, .masknet_hidden = 2,
               .masknet_reduction = 2.0};
  auto fim = build_fim(ps, "m", spec, 2, tiny_schema(), rng);
  // bottleneck = 1: mask1.w [2x1], mask1.b [1], mask2.w [1x2], mask2.b [2],
  // hidden.w [2x2], hidden.b [2], ln.gain [2], ln.bias [2], out.w [2x1], out.b [1]
  set_block<double>(ps, 0, {0.7, -0.3});
  set_block<double>(ps, 1, {0.2});
  set_block<double>(ps, 2, {1.1, -0.6});
  set_block<double>(ps, 3, {0.4, 0.9});
  set_block<double>(ps, 4, {0.5, 1.0, -0.25, 0.75});
  set_block<double>(ps, 5, {0.0, -0.1});
  set_block<double>(ps, 6, {1.2, 0.8});
  set_block<double>(ps, 7, {0.05, -0.05});
  set_block<double>(ps, 8, {2.0, -1.5});
  set_block<double>(ps, 9, {0.3});
  Matrix<double> x(1, 2);
  x.at(0, 0) = 0.9;
  x.at(0, 1) = -0.5;
  Matrix<double> out;
  fim->forward(ps, {.x = &x}, out, nullptr);

  const double bpre = 0.9 * 0.7 + (-0.5) * (-0.3) + 0.2;
  const double bact = std::max(0.0, bpre);
  const double mask0 = bact * 1.1 + 0.4, mask1 = bact * -0.6 + 0.9;
  const double h0 = 0.9 * 0.5 + (-0.5) * (-0.25) + 0.0;
  const double h1 = 0.9 * 1.0 + (-0.5) * 0.75 + (-0.1);
  const double mu = (h0 + h1) / 2.0;
  const double var = ((h0 - mu) * (h0 - mu) + (h1 - mu) * (h1 - mu)) / 2.0;
  const double inv = 1.0 / std::sqrt(var + 1e-5);
  const double ln0 = 1.2 * ((h0 - mu) * inv) + 0.05;
  const double ln1 = 0.8 * ((h1 - mu) * inv) - 0.05;
  const double a0 = std::max(0.0, ln0 * mask0);
  const double a1 = std::max(0.0, ln1 * mask1);
  const double expected = a0 * 2.0 + a1 * -1.5 + 0.3;
  CHECK(out.at(0, 0) == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("memonet with zeroed codebooks returns the projection bias") {
  ParamStore<float> ps;
  Rng rng(10);
  const auto schema = tiny_schema();
  FimSpec spec{.kind = FimKind::kMemonet, .output_dim = 2, .memonet_entries = 64,
               .memonet_code_dim = 4, .memonet_fields = {{"ca", "cb"}}};
  auto fim = build_fim(ps, "mn", spec, schema.input_width(), schema, rng);
  ps.block(0).value.assign(ps.block(0).value.size(), 0.0f);  // code1
  ps.block(1).value.assign(ps.block(1).value.size(), 0.0f);  // code2
  auto& proj_b = ps.block(ps.n_blocks() - 1).value;
  proj_b = {0.75f, -0.25f};
  auto batch = random_batch(rng, schema, 5);
  Matrix<float> out;
  fim->forward(ps, {.batch = &batch}, out, nullptr);
  for (std::size_t r = 0; r < 5; ++r) {
    CHECK(out.at(r, 0) == 0.75f);
    CHECK(out.at(r, 1) == -0.25f);
  }
}

TEST_CASE("memonet is deterministic and blind to non-selected fields") {
  ParamStore<float> ps;
  Rng rng(11);
  const auto schema = tiny_schema();
  FimSpec spec{.kind = FimKind::kMemonet, .output_dim = 3, .memonet_entries = 32,
               .memonet_code_dim = 4, .memonet_fields = {{"ca", "cb"}}};
  auto fim = build_fim(ps, "mn", spec, schema.input_width(), schema, rng);
  auto batch = random_batch(rng, schema, 4);
  Matrix<float> out1, out2;
  fim->forward(ps, {.batch = &batch}, out1, nullptr);
  fim->forward(ps, {.batch = &batch}, out2, nullptr);
  CHECK(out1 == out2);

  auto modified = batch;
  for (std::size_t r = 0; r < 4; ++r) modified.continuous_values.at(r, 0) += 100.0f;
  fim->forward(ps, {.batch = &modified}, out2, nullptr);
  CHECK(out1 == out2);

  CHECK_THROWS_AS(build_fim(ps, "bad",
                            FimSpec{.kind = FimKind::kMemonet,
                                    .memonet_fields = {{"ca", "missing"}}},
                            schema.input_width(), schema, rng),
                  Error);
  CHECK_THROWS_AS(build_fim(ps, "bad2",
                            FimSpec{.kind = FimKind::kMemonet,
                                    .memonet_fields = {{"ca", "xa"}}},
                            schema.input_width(), schema, rng),
                  Error);
}

TEST_CASE("parameter counts are exact") {
  ParamStore<float> ps;
  CHECK(ps.total_parameters() == 0);  // empty module
  Rng rng(12);
  FimSpec spec{.kind = FimKind::kMlp, .output_dim = 2, .mlp_hidden = {3}};
  auto fim = build_fim(ps, "e", spec, 4, tiny_schema(), rng);
  CHECK(fim->parameter_count(ps) == 23);  // 4*3+3 + 3*2+2
  CHECK(predicted_parameter_count(spec, 4) == 23);
}

TEST_CASE("predicted counts match built modules for every kind") {
  const auto schema = tiny_schema();
  Rng rng(13);
  std::vector<FimSpec> specs = {
      {.kind = FimKind::kMlp, .output_dim = 8, .mlp_hidden = {16, 8}},
      {.kind = FimKind::kGdcn, .output_dim = 8, .gdcn_layers = 2, .gdcn_rank = 0},
      {.kind = FimKind::kGdcn, .output_dim = 8, .gdcn_layers = 2, .gdcn_rank = 3},
      {.kind = FimKind::kMasknet, .output_dim = 8, .masknet_hidden = 10},
      {.kind = FimKind::kMemonet, .output_dim = 8, .memonet_entries = 128,
       .memonet_code_dim = 4, .memonet_fields = {{"ca", "cb"}}},
  };
  for (const auto& spec : specs) {
    ParamStore<float> ps;
    auto fim = build_fim(ps, "f", spec, schema.input_width(), schema, rng);
    CHECK(fim->parameter_count(ps) == predicted_parameter_count(spec, schema.input_width()));
  }
}

TEST_CASE("all kinds can be fit to a shared parameter budget") {
  const auto schema = tiny_schema();
  // gdcn's only knob is the rank (bounded by the input width), so the
  // shared budget must sit inside its reachable window.
  const std::size_t in_dim = 64;
  const std::size_t budget = 15000;
  Rng rng(14);
  std::vector<std::size_t> counts;
  for (auto kind : {FimKind::kMlp, FimKind::kGdcn, FimKind::kMasknet, FimKind::kMemonet}) {
    FimSpec spec;
    spec.kind = kind;
    spec.output_dim = 16;
    spec.memonet_fields = {{"ca", "cb"}};
    spec.parameter_budget = budget;
    ParamStore<float> ps;
    auto fim = build_fim(ps, "f", spec, in_dim, schema, rng);
    counts.push_back(fim->parameter_count(ps));
  }
  for (const std::size_t c : counts) {
    CHECK(static_cast<double>(c) >= 0.9 * budget);
    CHECK(static_cast<double>(c) <= 1.1 * budget);
  }
  // parity between any two kinds
  for (const std::size_t a : counts) {
    for (const std::size_t b : counts) {
      CHECK(static_cast<double>(a) <= 1.1 * static_cast<double>(b));
    }
  }
  // an unreachable budget errors out
  FimSpec tiny{.kind = FimKind::kGdcn, .output_dim = 512};
  CHECK_THROWS_AS(fit_to_budget(tiny, 640, 10), Error);
}

TEST_CASE("every kind emits output_dim-wide finite outputs") {
  const auto schema = tiny_schema();
  Rng rng(15);
  std::vector<FimSpec> specs = {
      {.kind = FimKind::kMlp, .output_dim = 6, .mlp_hidden = {12}},
      {.kind = FimKind::kGdcn, .output_dim = 6},
      {.kind = FimKind::kGdcn, .output_dim = 6, .gdcn_rank = 2},
      {.kind = FimKind::kMasknet, .output_dim = 6, .masknet_hidden = 8},
      {.kind = FimKind::kMemonet, .output_dim = 6, .memonet_entries = 64,
       .memonet_code_dim = 4, .memonet_fields = {{"ca", "cb"}}},
  };
  for (const auto& spec : specs) {
    ParamStore<float> ps;
    auto fim = build_fim(ps, "f", spec, schema.input_width(), schema, rng);
    for (std::size_t batch : {1u, 3u, 17u}) {
      auto eb = random_batch(rng, schema, batch);
      Matrix<float> x = random_input<float>(rng, batch, schema.input_width()), out;
      fim->forward(ps, {.x = &x, .batch = &eb}, out, nullptr);
      CHECK(out.rows() == batch);
      CHECK(out.cols() == 6);
      CHECK(out.all_finite());
    }
  }
}

TEST_CASE("analytic gradients match central differences for every kind") {
  const auto schema = tiny_schema();
  std::vector<FimSpec> specs = {
      {.kind = FimKind::kMlp, .output_dim = 3, .mlp_hidden = {4}},
      {.kind = FimKind::kGdcn, .output_dim = 3, .gdcn_layers = 2},
      {.kind = FimKind::kGdcn, .output_dim = 3, .gdcn_layers = 2, .gdcn_rank = 2},
      {.kind = FimKind::kMasknet, .output_dim = 3, .masknet_hidden = 4},
      {.kind = FimKind::kMemonet, .output_dim = 3, .memonet_entries = 16,
       .memonet_code_dim = 3, .memonet_fields = {{"ca", "cb"}}},
  };
  Rng rng(16);
  for (const auto& spec : specs) {
    INFO("kind = ", fim_kind_name(spec.kind), " rank = ", spec.gdcn_rank);
    ParamStore<double> ps;
    auto fim = build_fim(ps, "f", spec, 6, schema, rng);
    // Jitter every parameter (biases included) away from zero. Zero-init
    // biases can park ReLU pre-activations exactly at the kink (a dead mask
    // bottleneck makes the mask identically 0), where two-sided differences
    // are one-sided truths.
    for (std::size_t h = 0; h < ps.n_blocks(); ++h) {
      for (auto& v : ps.block(h).value) v += rng.uniform(-0.05, 0.05);
    }
    auto batch = random_batch(rng, schema, 5);
    Matrix<double> x = random_input<double>(rng, 5, 6);
    FimProbe<double> probe{&ps, fim.get(), {.x = &x, .batch = &batch}, {}};
    probe.direction.resize(5 * 3);
    for (auto& d : probe.direction) d = rng.normal();
    const double err = testutil::fd_max_rel_error<double>(
        ps, [&] { return probe.loss(); }, [&] { probe.backward(); });
    CHECK(err < 1e-4);
  }
}

TEST_CASE("gradients flow into dx for x-consuming kinds") {
  const auto schema = tiny_schema();
  Rng rng(17);
  for (auto kind : {FimKind::kMlp, FimKind::kGdcn, FimKind::kMasknet}) {
    FimSpec spec;
    spec.kind = kind;
    spec.output_dim = 3;
    spec.mlp_hidden = {4};
    spec.masknet_hidden = 4;
    ParamStore<double> ps;
    auto fim = build_fim(ps, "f", spec, 4, schema, rng);
    Matrix<double> x = random_input<double>(rng, 3, 4);
    Matrix<double> out;
    FimCache<double> cache;
    fim->forward(ps, {.x = &x}, out, &cache);
    Matrix<double> dout(3, 3), dx(3, 4);
    for (std::size_t i = 0; i < dout.size(); ++i) dout.data()[i] = rng.normal();
    fim->backward(ps, cache, dout, &dx);

    // dx against finite differences through a frozen direction
    Matrix<double> dir = dout;
    auto loss_at = [&](std::size_t i, double delta) {
      Matrix<double> xx = x;
      xx.data()[i] += delta;
      Matrix<double> o;
      fim->forward(ps, {.x = &xx}, o, nullptr);
      double s = 0.0;
      for (std::size_t j = 0; j < o.size(); ++j) s += o.data()[j] * dir.data()[j];
      return s;
    };
    for (std::size_t i = 0; i < x.size(); i += 5) {
      const double fd = (loss_at(i, 1e-6) - loss_at(i, -1e-6)) / 2e-6;
      CHECK(dx.data()[i] == doctest::Approx(fd).epsilon(1e-4));
    }
  }
}
