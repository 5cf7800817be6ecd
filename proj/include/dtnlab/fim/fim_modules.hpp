// Copyright 2026 The dtnlab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// of the License at http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS, WITHOUT
// WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.

#pragma once

#include "dtnlab/core/error.hpp"
#include "dtnlab/fim/fim.hpp"

namespace dtnlab::fim {

// ---- mlp ----------------------------------------------------------------

template <typename T>
class MlpFim final : public FimModule<T> {
 public:
  MlpFim(ParamStore<T>& ps, const std::string& name, const FimSpec& spec, std::size_t in_dim,
         Rng& rng) {
    this->spec_ = spec;
    mlp_.build(ps, name, in_dim, spec.mlp_hidden, spec.output_dim, rng);
    this->blocks_ = mlp_.blocks();
  }

  void forward(const ParamStore<T>& ps, const FimInput<T>& in, Matrix<T>& out,
               FimCache<T>* cache) const override {
    require(in.x->cols() == mlp_.in_dim(), "mlp", "input width mismatch");
    MlpCache<T>* mc = cache != nullptr ? &cache->template emplace<MlpCache<T>>() : nullptr;
    mlp_.forward(ps, *in.x, out, mc);
  }

  void backward(ParamStore<T>& ps, const FimCache<T>& cache, const Matrix<T>& dout,
                Matrix<T>* dx) const override {
    mlp_.backward(ps, std::get<MlpCache<T>>(cache), dout, dx, true);
  }

  void collect_relu_masks(const FimCache<T>& cache, std::vector<std::uint8_t>& out) const override {
    mlp_.collect_relu_masks(std::get<MlpCache<T>>(cache), out);
  }

 private:
  Mlp<T> mlp_;
};

// ---- gdcn ---------------------------------------------------------------

template <typename T>
class GdcnFim final : public FimModule<T> {
 public:
  GdcnFim(ParamStore<T>& ps, const std::string& name, const FimSpec& spec, std::size_t in_dim,
          Rng& rng) {
    this->spec_ = spec;
    in_dim_ = in_dim;
    rank_ = spec.gdcn_rank;
    require(rank_ <= in_dim, "gdcn", "rank exceeds input width");
    for (std::size_t l = 0; l < spec.gdcn_layers; ++l) {
      Layer layer;
      const std::string base = name + ".cross" + std::to_string(l);
      if (rank_ == 0) {
        layer.cross_w.build(ps, base + ".c", in_dim, in_dim, rng);
        layer.gate_w.build(ps, base + ".g", in_dim, in_dim, rng);
      } else {
        layer.cross_v.build(ps, base + ".c.v", in_dim, rank_, rng, /*bias=*/false);
        layer.cross_w.build(ps, base + ".c.u", rank_, in_dim, rng);
        layer.gate_v.build(ps, base + ".g.v", in_dim, rank_, rng, /*bias=*/false);
        layer.gate_w.build(ps, base + ".g.u", rank_, in_dim, rng);
      }
      layers_.push_back(layer);
    }
    proj_.build(ps, name + ".proj", in_dim, spec.output_dim, rng);
    for (const auto& l : layers_) {
      append(l.cross_w.blocks());
      append(l.gate_w.blocks());
      if (rank_ > 0) {
        append(l.cross_v.blocks());
        append(l.gate_v.blocks());
      }
    }
    append(proj_.blocks());
  }

  void forward(const ParamStore<T>& ps, const FimInput<T>& in, Matrix<T>& out,
               FimCache<T>* cache) const override {
    require(in.x->cols() == in_dim_, "gdcn", "input width mismatch");
    GdcnCache<T> local;
    GdcnCache<T>& c = cache != nullptr ? cache->template emplace<GdcnCache<T>>() : local;
    const Matrix<T>& x = *in.x;
    c.x0 = x;
    c.c.assign(1, x);
    const std::size_t n = x.size();
    for (const auto& layer : layers_) {
      const Matrix<T>& cl = c.c.back();
      Matrix<T> u, pre_g, mid_c, mid_g;
      if (rank_ == 0) {
        layer.cross_w.forward(ps, cl, u);
        layer.gate_w.forward(ps, cl, pre_g);
      } else {
        layer.cross_v.forward(ps, cl, mid_c);
        layer.cross_w.forward(ps, mid_c, u);
        layer.gate_v.forward(ps, cl, mid_g);
        layer.gate_w.forward(ps, mid_g, pre_g);
      }
      Matrix<T> g(pre_g.rows(), pre_g.cols());
      for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] = stable_sigmoid(pre_g.data()[i]);
      Matrix<T> next(x.rows(), in_dim_);
      for (std::size_t i = 0; i < n; ++i) {
        next.data()[i] = c.x0.data()[i] * u.data()[i] * g.data()[i] + cl.data()[i];
      }
      c.u.push_back(std::move(u));
      c.gate.push_back(std::move(g));
      c.mid_c.push_back(std::move(mid_c));
      c.mid_g.push_back(std::move(mid_g));
      c.c.push_back(std::move(next));
    }
    proj_.forward(ps, c.c.back(), out);
  }

  void backward(ParamStore<T>& ps, const FimCache<T>& cache, const Matrix<T>& dout,
                Matrix<T>* dx) const override {
    const auto& c = std::get<GdcnCache<T>>(cache);
    const std::size_t n = c.x0.size();
    Matrix<T> dc(c.x0.rows(), in_dim_);
    proj_.backward(ps, c.c.back(), dout, &dc, /*dx_accumulate=*/false);
    Matrix<T> dx0(c.x0.rows(), in_dim_);  // multiplier-path gradient into x0
    for (std::size_t l = layers_.size(); l-- > 0;) {
      const auto& layer = layers_[l];
      const Matrix<T>& cl = c.c[l];
      const Matrix<T>& u = c.u[l];
      const Matrix<T>& g = c.gate[l];
      Matrix<T> du(cl.rows(), in_dim_), dpre_g(cl.rows(), in_dim_);
      for (std::size_t i = 0; i < n; ++i) {
        const T t = dc.data()[i];
        const T x0v = c.x0.data()[i];
        const T gv = g.data()[i];
        const T uv = u.data()[i];
        dx0.data()[i] += t * uv * gv;
        du.data()[i] = t * x0v * gv;
        dpre_g.data()[i] = t * x0v * uv * gv * (T(1) - gv);
      }
      // residual: dc_l starts as dc_{l+1}; cross/gate paths accumulate into it
      Matrix<T> dcl = dc;
      if (rank_ == 0) {
        layer.cross_w.backward(ps, cl, du, &dcl, true);
        layer.gate_w.backward(ps, cl, dpre_g, &dcl, true);
      } else {
        Matrix<T> dmid_c(cl.rows(), rank_), dmid_g(cl.rows(), rank_);
        layer.cross_w.backward(ps, c.mid_c[l], du, &dmid_c, false);
        layer.cross_v.backward(ps, cl, dmid_c, &dcl, true);
        layer.gate_w.backward(ps, c.mid_g[l], dpre_g, &dmid_g, false);
        layer.gate_v.backward(ps, cl, dmid_g, &dcl, true);
      }
      dc = std::move(dcl);
    }
    if (dx != nullptr) {
      kernels::add(dx->data(), dc.data(), dx->data(), n);
      kernels::add(dx->data(), dx0.data(), dx->data(), n);
    }
  }

 private:
  struct Layer {
    Linear<T> cross_w;  // full-rank W, or low-rank U
    Linear<T> cross_v;  // low-rank V (no bias)
    Linear<T> gate_w;
    Linear<T> gate_v;
  };

  void append(const std::vector<std::size_t>& hs) {
    for (const auto h : hs) this->blocks_.push_back(h);
  }

  std::vector<Layer> layers_;
  Linear<T> proj_;
  std::size_t in_dim_ = 0;
  std::size_t rank_ = 0;
};

// ---- masknet --------------------------------------------------------------

template <typename T>
class MasknetFim final : public FimModule<T> {
 public:
  MasknetFim(ParamStore<T>& ps, const std::string& name, const FimSpec& spec, std::size_t in_dim,
             Rng& rng) {
    this->spec_ = spec;
    in_dim_ = in_dim;
    hidden_ = spec.masknet_hidden;
    require(hidden_ > 0, "masknet", "hidden width must be positive");
    require(spec.masknet_reduction > 0.0, "masknet", "reduction must be positive");
    bneck_ = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(hidden_ / spec.masknet_reduction)));
    mask1_.build(ps, name + ".mask1", in_dim, bneck_, rng);
    mask2_.build(ps, name + ".mask2", bneck_, hidden_, rng);
    hid_.build(ps, name + ".hidden", in_dim, hidden_, rng);
    ln_.build(ps, name + ".ln", hidden_);
    out_.build(ps, name + ".out", hidden_, spec.output_dim, rng);
    for (const auto& hs :
         {mask1_.blocks(), mask2_.blocks(), hid_.blocks(), ln_.blocks(), out_.blocks()}) {
      for (const auto h : hs) this->blocks_.push_back(h);
    }
  }

  void forward(const ParamStore<T>& ps, const FimInput<T>& in, Matrix<T>& out,
               FimCache<T>* cache) const override {
    require(in.x->cols() == in_dim_, "masknet", "input width mismatch");
    MasknetCache<T> local;
    MasknetCache<T>& c = cache != nullptr ? cache->template emplace<MasknetCache<T>>() : local;
    c.x = *in.x;
    mask1_.forward(ps, c.x, c.bneck_pre);
    c.bneck_act.resize(c.bneck_pre.rows(), c.bneck_pre.cols());
    kernels::relu(c.bneck_pre.data(), c.bneck_act.data(), c.bneck_pre.size());
    mask2_.forward(ps, c.bneck_act, c.mask);
    hid_.forward(ps, c.x, c.hidden);
    ln_.forward(ps, c.hidden, c.ln_out, &c.ln);
    c.masked.resize(c.ln_out.rows(), c.ln_out.cols());
    kernels::mul(c.ln_out.data(), c.mask.data(), c.masked.data(), c.masked.size());
    c.act.resize(c.masked.rows(), c.masked.cols());
    kernels::relu(c.masked.data(), c.act.data(), c.masked.size());
    out_.forward(ps, c.act, out);
  }

  void backward(ParamStore<T>& ps, const FimCache<T>& cache, const Matrix<T>& dout,
                Matrix<T>* dx) const override {
    const auto& c = std::get<MasknetCache<T>>(cache);
    Matrix<T> dact(c.act.rows(), c.act.cols());
    out_.backward(ps, c.act, dout, &dact, false);
    Matrix<T> dmasked(dact.rows(), dact.cols());
    kernels::relu_backward(c.masked.data(), dact.data(), dmasked.data(), dact.size(), false);
    Matrix<T> dln(dmasked.rows(), dmasked.cols()), dmask(dmasked.rows(), dmasked.cols());
    kernels::mul(dmasked.data(), c.mask.data(), dln.data(), dln.size());
    kernels::mul(dmasked.data(), c.ln_out.data(), dmask.data(), dmask.size());
    Matrix<T> dhidden;
    ln_.backward(ps, c.ln, dln, dhidden);
    hid_.backward(ps, c.x, dhidden, dx, true);
    Matrix<T> dbneck_act(c.bneck_act.rows(), c.bneck_act.cols());
    mask2_.backward(ps, c.bneck_act, dmask, &dbneck_act, false);
    Matrix<T> dbneck_pre(dbneck_act.rows(), dbneck_act.cols());
    kernels::relu_backward(c.bneck_pre.data(), dbneck_act.data(), dbneck_pre.data(),
                           dbneck_act.size(), false);
    mask1_.backward(ps, c.x, dbneck_pre, dx, true);
  }

  void collect_relu_masks(const FimCache<T>& cache, std::vector<std::uint8_t>& out) const override {
    const auto& c = std::get<MasknetCache<T>>(cache);
    for (std::size_t i = 0; i < c.bneck_pre.size(); ++i)
      out.push_back(c.bneck_pre.data()[i] > T(0) ? 1 : 0);
    for (std::size_t i = 0; i < c.masked.size(); ++i)
      out.push_back(c.masked.data()[i] > T(0) ? 1 : 0);
  }

 private:
  Linear<T> mask1_, mask2_, hid_, out_;
  LayerNorm<T> ln_;
  std::size_t in_dim_ = 0, hidden_ = 0, bneck_ = 0;
};

// ---- memonet --------------------------------------------------------------

std::uint64_t memonet_pair_key(std::uint32_t field_a, std::int32_t id_a, std::uint32_t field_b,
                               std::int32_t id_b);
std::size_t memonet_hash1(std::uint64_t key, std::size_t entries);
std::size_t memonet_hash2(std::uint64_t key, std::size_t entries);

template <typename T>
class MemonetFim final : public FimModule<T> {
 public:
  MemonetFim(ParamStore<T>& ps, const std::string& name, const FimSpec& spec,
             const data::FeatureSchema& schema, Rng& rng) {
    this->spec_ = spec;
    require(!spec.memonet_fields.empty(), "memonet", "no cross fields selected");
    require(spec.memonet_entries >= 2, "memonet", "codebook needs at least 2 entries");
    for (const auto& [a, b] : spec.memonet_fields) {
      const std::size_t fa = schema.feature_index(a);
      const std::size_t fb = schema.feature_index(b);
      require(schema.features()[fa].is_categorical(), "memonet",
              "cross field '" + a + "' is not categorical");
      require(schema.features()[fb].is_categorical(), "memonet",
              "cross field '" + b + "' is not categorical");
      pairs_.push_back({static_cast<std::uint32_t>(fa), static_cast<std::uint32_t>(fb),
                        schema.column_of(fa), schema.column_of(fb)});
    }
    const std::size_t cd = spec.memonet_code_dim;
    code1_ = ps.add(name + ".code1", {spec.memonet_entries, cd});
    code2_ = ps.add(name + ".code2", {spec.memonet_entries, cd});
    init_normal(ps.block(code1_), 0.01, rng);
    init_normal(ps.block(code2_), 0.01, rng);
    combine_.build(ps, name + ".combine", cd, cd, rng);
    proj_.build(ps, name + ".proj", pairs_.size() * cd, spec.output_dim, rng);
    this->blocks_ = {code1_, code2_};
    for (const auto& hs : {combine_.blocks(), proj_.blocks()}) {
      for (const auto h : hs) this->blocks_.push_back(h);
    }
  }

  void forward(const ParamStore<T>& ps, const FimInput<T>& in, Matrix<T>& out,
               FimCache<T>* cache) const override {
    require(in.batch != nullptr, "memonet", "needs categorical ids");
    const auto& ids = in.batch->categorical_ids;
    const std::size_t batch = ids.rows();
    const std::size_t cd = this->spec_.memonet_code_dim;
    const std::size_t entries = this->spec_.memonet_entries;
    MemonetCache<T> local;
    MemonetCache<T>& c = cache != nullptr ? cache->template emplace<MemonetCache<T>>() : local;
    c.idx1.resize(batch * pairs_.size());
    c.idx2.resize(batch * pairs_.size());
    c.summed.resize(batch, pairs_.size() * cd);
    const T* cb1 = ps.block(code1_).value.data();
    const T* cb2 = ps.block(code2_).value.data();
    for (std::size_t r = 0; r < batch; ++r) {
      for (std::size_t p = 0; p < pairs_.size(); ++p) {
        const auto& pr = pairs_[p];
        const std::uint64_t key = memonet_pair_key(pr.field_a, ids.at(r, pr.col_a), pr.field_b,
                                                   ids.at(r, pr.col_b));
        const std::size_t i1 = memonet_hash1(key, entries);
        const std::size_t i2 = memonet_hash2(key, entries);
        c.idx1[r * pairs_.size() + p] = i1;
        c.idx2[r * pairs_.size() + p] = i2;
        T* dst = c.summed.row(r) + p * cd;
        kernels::add(cb1 + i1 * cd, cb2 + i2 * cd, dst, cd);
      }
    }
    // shared combine applied per pair slice: view [B x np*cd] as [B*np x cd]
    c.combined.resize(batch, pairs_.size() * cd);
    combine_forward(ps, c.summed, c.combined, batch * pairs_.size(), cd);
    proj_.forward(ps, c.combined, out);
  }

  void backward(ParamStore<T>& ps, const FimCache<T>& cache, const Matrix<T>& dout,
                Matrix<T>* dx) const override {
    (void)dx;  // ids are discrete; nothing flows to the embeddings
    const auto& c = std::get<MemonetCache<T>>(cache);
    const std::size_t cd = this->spec_.memonet_code_dim;
    const std::size_t batch = c.summed.rows();
    Matrix<T> dcombined(batch, c.combined.cols());
    proj_.backward(ps, c.combined, dout, &dcombined, false);
    Matrix<T> dsummed(batch, c.summed.cols());
    combine_backward(ps, c.summed, dcombined, dsummed, batch * pairs_.size(), cd);
    T* g1 = ps.block(code1_).grad.data();
    T* g2 = ps.block(code2_).grad.data();
    for (std::size_t r = 0; r < batch; ++r) {
      for (std::size_t p = 0; p < pairs_.size(); ++p) {
        const T* src = dsummed.row(r) + p * cd;
        const std::size_t i1 = c.idx1[r * pairs_.size() + p];
        const std::size_t i2 = c.idx2[r * pairs_.size() + p];
        kernels::add(g1 + i1 * cd, src, g1 + i1 * cd, cd);
        kernels::add(g2 + i2 * cd, src, g2 + i2 * cd, cd);
      }
    }
  }

 private:
  struct PairRef {
    std::uint32_t field_a, field_b;
    std::size_t col_a, col_b;
  };

  void combine_forward(const ParamStore<T>& ps, const Matrix<T>& in, Matrix<T>& out,
                       std::size_t rows, std::size_t cd) const {
    kernels::gemm_nn(in.data(), ps.block(combine_.w).value.data(), out.data(), rows, cd, cd,
                     false);
    const T* bias = ps.block(combine_.b).value.data();
    for (std::size_t r = 0; r < rows; ++r) {
      T* dst = out.data() + r * cd;
      kernels::add(dst, bias, dst, cd);
    }
  }

  void combine_backward(ParamStore<T>& ps, const Matrix<T>& in, const Matrix<T>& dout,
                        Matrix<T>& din, std::size_t rows, std::size_t cd) const {
    kernels::gemm_tn(in.data(), dout.data(), ps.block(combine_.w).grad.data(), rows, cd, cd, true);
    T* bg = ps.block(combine_.b).grad.data();
    for (std::size_t r = 0; r < rows; ++r) kernels::add(bg, dout.data() + r * cd, bg, cd);
    kernels::gemm_nt(dout.data(), ps.block(combine_.w).value.data(), din.data(), rows, cd, cd,
                     false);
  }

  std::vector<PairRef> pairs_;
  std::size_t code1_ = 0, code2_ = 0;
  Linear<T> combine_, proj_;
};

}  // namespace dtnlab::fim
