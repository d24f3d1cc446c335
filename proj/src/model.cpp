// Copyright 2026 The mmser Authors
//
// Licensed under the Apache License, Version 2.0

#include "mmser/model.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "mmser/common.hpp"

namespace mmser::nn {

namespace {
constexpr double kInitStd = 0.02;
constexpr double kMaskedOut = -1e9;

Tensor trunc_normal_init(std::vector<int64_t> shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data) v = rng.trunc_normal() * kInitStd;
  return t;
}
}  // namespace

void ModelConfig::validate() const {
  if (patch_size < 1 || input_size % patch_size != 0)
    raise("format", "input size not divisible by patch size");
  if (base_dim < 1 || n_classes < 2) raise("format", "bad base_dim or n_classes");
  for (int g = 0; g < 4; ++g) {
    if (depths[g] < 1) raise("format", "each group needs at least one block");
    if (heads[g] < 1 || stage_dim(g) % heads[g] != 0)
      raise("format", "heads must divide the group dim");
    if (stage_grid(g) < 1 || stage_grid(g) % stage_window(g) != 0)
      raise("format", "window must divide the grid side");
  }
  if (mlp_ratio < 1) raise("format", "mlp_ratio must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0 || drop_path < 0.0 || drop_path >= 1.0)
    raise("format", "rates must lie in [0, 1)");
}

std::string ModelConfig::to_json() const {
  nlohmann::json j;
  j["patch_size"] = patch_size;
  j["attn_window"] = attn_window;
  j["depths"] = depths;
  j["base_dim"] = base_dim;
  j["heads"] = heads;
  j["mlp_ratio"] = mlp_ratio;
  j["n_classes"] = n_classes;
  j["input_size"] = input_size;
  j["dropout"] = dropout;
  j["drop_path"] = drop_path;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  ModelConfig c;
  c.patch_size = j.value("patch_size", c.patch_size);
  c.attn_window = j.value("attn_window", c.attn_window);
  if (j.contains("depths")) c.depths = j.at("depths").get<std::array<int, 4>>();
  c.base_dim = j.value("base_dim", c.base_dim);
  if (j.contains("heads")) c.heads = j.at("heads").get<std::array<int, 4>>();
  c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
  c.n_classes = j.value("n_classes", c.n_classes);
  c.input_size = j.value("input_size", c.input_size);
  c.dropout = j.value("dropout", c.dropout);
  c.drop_path = j.value("drop_path", c.drop_path);
  c.validate();
  return c;
}

std::string ModelConfig::incompatibility(const ModelConfig& other) const {
  if (patch_size != other.patch_size) return "patch_size";
  if (attn_window != other.attn_window) return "attn_window";
  if (depths != other.depths) return "depths";
  if (base_dim != other.base_dim) return "base_dim";
  if (heads != other.heads) return "heads";
  if (mlp_ratio != other.mlp_ratio) return "mlp_ratio";
  if (n_classes != other.n_classes) return "n_classes";
  if (input_size != other.input_size) return "input_size";
  return "";
}

Model::Model(ModelConfig config, uint64_t init_seed) : config_(config) {
  config_.validate();
  build_params(init_seed);
  build_plans();
}

void Model::build_params(uint64_t seed) {
  Rng rng(seed);
  const int p2 = config_.patch_size * config_.patch_size;

  params_.add("patch_embed.weight", trunc_normal_init({p2, config_.base_dim}, rng));
  params_.add("patch_embed.bias", Tensor({config_.base_dim}));

  for (int g = 0; g < 4; ++g) {
    const int64_t d = config_.stage_dim(g);
    const int64_t w = config_.stage_window(g);
    const int64_t rel = (2 * w - 1) * (2 * w - 1);
    const int64_t hidden = d * config_.mlp_ratio;
    for (int b = 0; b < config_.depths[g]; ++b) {
      const std::string pre = "s" + std::to_string(g) + ".b" + std::to_string(b) + ".";
      params_.add(pre + "norm1.gamma", Tensor::full({d}, 1.0));
      params_.add(pre + "norm1.beta", Tensor({d}));
      params_.add(pre + "attn.qkv.weight", trunc_normal_init({d, 3 * d}, rng));
      params_.add(pre + "attn.qkv.bias", Tensor({3 * d}));
      params_.add(pre + "attn.relpos", Tensor({rel, config_.heads[g]}));
      params_.add(pre + "attn.proj.weight", trunc_normal_init({d, d}, rng));
      params_.add(pre + "attn.proj.bias", Tensor({d}));
      params_.add(pre + "norm2.gamma", Tensor::full({d}, 1.0));
      params_.add(pre + "norm2.beta", Tensor({d}));
      params_.add(pre + "mlp.fc1.weight", trunc_normal_init({d, hidden}, rng));
      params_.add(pre + "mlp.fc1.bias", Tensor({hidden}));
      params_.add(pre + "mlp.fc2.weight", trunc_normal_init({hidden, d}, rng));
      params_.add(pre + "mlp.fc2.bias", Tensor({d}));
    }
    if (g < 3) {
      const std::string pre = "merge" + std::to_string(g) + ".";
      params_.add(pre + "norm.gamma", Tensor::full({4 * d}, 1.0));
      params_.add(pre + "norm.beta", Tensor({4 * d}));
      params_.add(pre + "reduction.weight", trunc_normal_init({4 * d, 2 * d}, rng));
    }
  }
  const int64_t d3 = config_.stage_dim(3);
  params_.add("final_norm.gamma", Tensor::full({d3}, 1.0));
  params_.add("final_norm.beta", Tensor({d3}));
  params_.add("head.weight", trunc_normal_init({9 * d3, config_.n_classes}, rng));
  params_.add("head.bias", Tensor({config_.n_classes}));
}

void Model::build_plans() {
  const int s = config_.input_size;
  const int p = config_.patch_size;
  const int grid0 = s / p;

  {
    auto idx = std::make_shared<std::vector<int64_t>>();
    idx->reserve(static_cast<size_t>(grid0) * grid0 * p * p);
    for (int tr = 0; tr < grid0; ++tr)
      for (int tc = 0; tc < grid0; ++tc)
        for (int pr = 0; pr < p; ++pr)
          for (int pc = 0; pc < p; ++pc)
            idx->push_back(static_cast<int64_t>(tr * p + pr) * s + (tc * p + pc));
    embed_cols_ = idx;
  }

  for (int g = 0; g < 4; ++g) {
    StagePlan& plan = plans_[static_cast<size_t>(g)];
    const int grid = config_.stage_grid(g);
    const int w = config_.stage_window(g);
    const int d = config_.stage_dim(g);
    const int h = config_.heads[g];
    const int dh = d / h;
    const int wins_per_side = grid / w;
    const int n_windows = wins_per_side * wins_per_side;
    const int w2 = w * w;
    const int64_t tokens = static_cast<int64_t>(grid) * grid;

    for (int variant = 0; variant < 2; ++variant) {
      const int shift = variant == 0 ? 0 : w / 2;
      if (variant == 1 && (w >= grid || w / 2 == 0)) break;

      // token index of each (window, position) pair after the cyclic shift
      std::vector<int64_t> window_token(static_cast<size_t>(n_windows) * w2);
      for (int wr = 0; wr < wins_per_side; ++wr)
        for (int wc = 0; wc < wins_per_side; ++wc)
          for (int pr = 0; pr < w; ++pr)
            for (int pc = 0; pc < w; ++pc) {
              const int r = (wr * w + pr + shift) % grid;
              const int c = (wc * w + pc + shift) % grid;
              window_token[static_cast<size_t>((wr * wins_per_side + wc) * w2 + pr * w + pc)] =
                  static_cast<int64_t>(r) * grid + c;
            }

      for (int which = 0; which < 3; ++which) {
        auto idx = std::make_shared<std::vector<int64_t>>();
        idx->reserve(static_cast<size_t>(n_windows) * h * w2 * dh);
        for (int wi = 0; wi < n_windows; ++wi)
          for (int hh = 0; hh < h; ++hh)
            for (int i = 0; i < w2; ++i) {
              const int64_t t = window_token[static_cast<size_t>(wi * w2 + i)];
              const int64_t col0 = static_cast<int64_t>(which) * d + hh * dh;
              for (int c = 0; c < dh; ++c) idx->push_back(t * 3 * d + col0 + c);
            }
        plan.qkv[variant][which] = idx;
      }

      {
        // inverse: token -> (window, position)
        std::vector<std::pair<int, int>> inv(static_cast<size_t>(tokens));
        for (int wi = 0; wi < n_windows; ++wi)
          for (int i = 0; i < w2; ++i)
            inv[static_cast<size_t>(window_token[static_cast<size_t>(wi * w2 + i)])] = {wi, i};
        auto idx = std::make_shared<std::vector<int64_t>>();
        idx->reserve(static_cast<size_t>(tokens) * d);
        for (int64_t t = 0; t < tokens; ++t) {
          const auto [wi, i] = inv[static_cast<size_t>(t)];
          for (int hh = 0; hh < h; ++hh)
            for (int c = 0; c < dh; ++c)
              idx->push_back((static_cast<int64_t>(wi) * h + hh) * w2 * dh +
                             static_cast<int64_t>(i) * dh + c);
        }
        plan.merge_back[variant] = idx;
      }

      if (shift > 0) {
        // Positions from discontiguous source regions must not attend to
        // each other; regions follow the shifted coordinate slices.
        auto region = [&](int a) { return a < grid - w ? 0 : (a < grid - shift ? 1 : 2); };
        Tensor mask({n_windows, w2, w2});
        for (int wr = 0; wr < wins_per_side; ++wr)
          for (int wc = 0; wc < wins_per_side; ++wc) {
            const int wi = wr * wins_per_side + wc;
            std::vector<int> group(static_cast<size_t>(w2));
            for (int pr = 0; pr < w; ++pr)
              for (int pc = 0; pc < w; ++pc)
                group[static_cast<size_t>(pr * w + pc)] =
                    region(wr * w + pr) * 3 + region(wc * w + pc);
            for (int i = 0; i < w2; ++i)
              for (int j = 0; j < w2; ++j)
                mask.at(wi, i, j) = group[static_cast<size_t>(i)] == group[static_cast<size_t>(j)]
                                        ? 0.0
                                        : kMaskedOut;
          }
        plan.shift_mask = std::make_shared<const Tensor>(std::move(mask));
      }
    }

    {
      auto idx = std::make_shared<std::vector<int64_t>>();
      idx->reserve(static_cast<size_t>(h) * w2 * w2);
      for (int hh = 0; hh < h; ++hh)
        for (int i = 0; i < w2; ++i)
          for (int j = 0; j < w2; ++j) {
            const int dr = i / w - j / w + w - 1;
            const int dc = i % w - j % w + w - 1;
            idx->push_back(static_cast<int64_t>(dr * (2 * w - 1) + dc) * h + hh);
          }
      plan.relpos = idx;
    }

    if (g < 3 && grid % 2 == 0) {
      auto idx = std::make_shared<std::vector<int64_t>>();
      const int half = grid / 2;
      idx->reserve(static_cast<size_t>(half) * half * 4 * d);
      for (int r = 0; r < half; ++r)
        for (int c = 0; c < half; ++c)
          for (int corner = 0; corner < 4; ++corner) {
            const int sr = 2 * r + (corner & 1);
            const int sc = 2 * c + (corner >> 1);
            const int64_t token = static_cast<int64_t>(sr) * grid + sc;
            for (int ch = 0; ch < d; ++ch) idx->push_back(token * d + ch);
          }
      plan.patch_merge = idx;
    }
  }

  {
    const int g3 = config_.stage_grid(3);
    const int64_t d3 = config_.stage_dim(3);
    auto idx = std::make_shared<std::vector<int64_t>>();
    idx->reserve(static_cast<size_t>(g3) * g3 * 9 * d3);
    for (int r = 0; r < g3; ++r)
      for (int c = 0; c < g3; ++c)
        for (int dr = -1; dr <= 1; ++dr)
          for (int dc = -1; dc <= 1; ++dc) {
            const int rr = r + dr;
            const int cc = c + dc;
            const bool inside = rr >= 0 && rr < g3 && cc >= 0 && cc < g3;
            for (int64_t ch = 0; ch < d3; ++ch)
              idx->push_back(inside ? (static_cast<int64_t>(rr) * g3 + cc) * d3 + ch : -1);
          }
    head_cols_ = idx;
  }
}

namespace {
ag::Value apply_dropout(ag::Graph& g, ag::Value x, double rate, bool train, Rng* rng) {
  if (!train || rate <= 0.0 || rng == nullptr) return x;
  Tensor mask(g.shape(x));
  const double inv = 1.0 / (1.0 - rate);
  for (auto& m : mask.data) m = rng->uniform() < rate ? 0.0 : inv;
  return g.mul_const(x, std::move(mask));
}

ag::Value apply_drop_path(ag::Graph& g, ag::Value branch, double rate, bool train,
                          Rng* rng) {
  if (!train || rate <= 0.0 || rng == nullptr) return branch;
  const bool drop = rng->uniform() < rate;
  return g.scale(branch, drop ? 0.0 : 1.0 / (1.0 - rate));
}
}  // namespace

ag::Value Model::patch_embed(ag::Graph& g, const Tensor& image) const {
  const int s = config_.input_size;
  if (image.rank() != 2 || image.shape[0] != s || image.shape[1] != s)
    raise("shape_mismatch", "patch_embed expects a " + std::to_string(s) + "x" +
                                std::to_string(s) + " image");
  auto& store = const_cast<ParamStore&>(params_);
  const int grid = s / config_.patch_size;
  const int64_t tokens = static_cast<int64_t>(grid) * grid;
  const int64_t p2 = config_.patch_size * config_.patch_size;

  ag::Value x = g.input(image);
  ag::Value cols = g.gather(x, embed_cols_, {tokens, p2});
  ag::Value w = g.param(store, params_.find("patch_embed.weight"));
  ag::Value b = g.param(store, params_.find("patch_embed.bias"));
  return g.add_rowvec(g.matmul(cols, w), b);
}

ag::Value Model::window_attention(ag::Graph& g, ag::Value tokens, int stage,
                                  int block, int shift) const {
  auto& store = const_cast<ParamStore&>(params_);
  const StagePlan& plan = plans_[static_cast<size_t>(stage)];
  const int grid = config_.stage_grid(stage);
  const int w = config_.stage_window(stage);
  const int d = config_.stage_dim(stage);
  const int h = config_.heads[stage];
  const int dh = d / h;
  const int n_windows = (grid / w) * (grid / w);
  const int w2 = w * w;
  const int64_t t = static_cast<int64_t>(grid) * grid;
  if (shift != 0 && shift != w / 2) raise("format", "shift must be 0 or window/2");
  const int variant = shift > 0 ? 1 : 0;
  if (variant == 1 && !plan.qkv[1][0])
    raise("format", "stage grid does not admit shifted windows");
  const std::string pre = "s" + std::to_string(stage) + ".b" + std::to_string(block) + ".";
  auto p = [&](const std::string& name) { return g.param(store, params_.find(pre + name)); };

  ag::Value qkv = g.add_rowvec(g.matmul(tokens, p("attn.qkv.weight")), p("attn.qkv.bias"));
  const std::vector<int64_t> split_shape = {static_cast<int64_t>(n_windows) * h, w2, dh};
  ag::Value q = g.gather(qkv, plan.qkv[variant][0], split_shape);
  ag::Value k = g.gather(qkv, plan.qkv[variant][1], split_shape);
  ag::Value v = g.gather(qkv, plan.qkv[variant][2], split_shape);
  q = g.scale(q, 1.0 / std::sqrt(static_cast<double>(dh)));
  ag::Value scores = g.bmm(q, k, false, true);
  ag::Value bias = g.gather(p("attn.relpos"), plan.relpos, {h, w2, w2});
  scores = g.attn_bias(scores, bias, h, variant == 1 ? plan.shift_mask : nullptr);
  ag::Value probs = g.softmax_lastdim(scores);
  ag::Value ctx = g.bmm(probs, v);
  ag::Value merged = g.gather(ctx, plan.merge_back[variant], {t, d});
  return g.add_rowvec(g.matmul(merged, p("attn.proj.weight")), p("attn.proj.bias"));
}

ag::Value Model::swin_block(ag::Graph& g, ag::Value tokens, int stage, int block,
                            bool train_mode, Rng* dropout_rng) const {
  auto& store = const_cast<ParamStore&>(params_);
  const int grid = config_.stage_grid(stage);
  const int w = config_.stage_window(stage);
  const int shift = (block % 2 == 1 && w < grid) ? w / 2 : 0;
  const std::string pre = "s" + std::to_string(stage) + ".b" + std::to_string(block) + ".";
  auto p = [&](const std::string& name) { return g.param(store, params_.find(pre + name)); };

  // attention branch
  ag::Value normed = g.layer_norm(tokens, p("norm1.gamma"), p("norm1.beta"));
  ag::Value attn_out = window_attention(g, normed, stage, block, shift);
  attn_out = apply_dropout(g, attn_out, config_.dropout, train_mode, dropout_rng);
  attn_out = apply_drop_path(g, attn_out, config_.drop_path, train_mode, dropout_rng);
  ag::Value x = g.add(tokens, attn_out);

  // MLP branch
  ag::Value normed2 = g.layer_norm(x, p("norm2.gamma"), p("norm2.beta"));
  ag::Value hidden = g.gelu(
      g.add_rowvec(g.matmul(normed2, p("mlp.fc1.weight")), p("mlp.fc1.bias")));
  hidden = apply_dropout(g, hidden, config_.dropout, train_mode, dropout_rng);
  ag::Value mlp_out =
      g.add_rowvec(g.matmul(hidden, p("mlp.fc2.weight")), p("mlp.fc2.bias"));
  mlp_out = apply_dropout(g, mlp_out, config_.dropout, train_mode, dropout_rng);
  mlp_out = apply_drop_path(g, mlp_out, config_.drop_path, train_mode, dropout_rng);
  return g.add(x, mlp_out);
}

ag::Value Model::patch_merging(ag::Graph& g, ag::Value tokens, int stage) const {
  auto& store = const_cast<ParamStore&>(params_);
  const int grid = config_.stage_grid(stage);
  if (grid % 2 != 0) raise("shape_mismatch", "patch merging needs an even grid side");
  const StagePlan& plan = plans_[static_cast<size_t>(stage)];
  const int64_t d = config_.stage_dim(stage);
  const int64_t quarter = static_cast<int64_t>(grid / 2) * (grid / 2);
  const std::string pre = "merge" + std::to_string(stage) + ".";

  ag::Value cat = g.gather(tokens, plan.patch_merge, {quarter, 4 * d});
  ag::Value normed = g.layer_norm(cat, g.param(store, params_.find(pre + "norm.gamma")),
                                  g.param(store, params_.find(pre + "norm.beta")));
  return g.matmul(normed, g.param(store, params_.find(pre + "reduction.weight")));
}

ag::Value Model::token_semantic_head(ag::Graph& g, ag::Value tokens) const {
  auto& store = const_cast<ParamStore&>(params_);
  const int g3 = config_.stage_grid(3);
  const int64_t d3 = config_.stage_dim(3);
  const int64_t t = static_cast<int64_t>(g3) * g3;

  ag::Value normed =
      g.layer_norm(tokens, g.param(store, params_.find("final_norm.gamma")),
                   g.param(store, params_.find("final_norm.beta")));
  ag::Value cols = g.gather(normed, head_cols_, {t, 9 * d3});
  ag::Value maps = g.add_rowvec(
      g.matmul(cols, g.param(store, params_.find("head.weight"))),
      g.param(store, params_.find("head.bias")));
  return g.mean_rows(maps);
}

ag::Value Model::backbone_and_head(ag::Graph& g, ag::Value tokens, bool train_mode,
                                   Rng* dropout_rng, ShapeTrace* trace) const {
  if (trace) trace->emplace_back(g.shape(tokens)[0], g.shape(tokens)[1]);
  for (int stage = 0; stage < 4; ++stage) {
    for (int block = 0; block < config_.depths[stage]; ++block)
      tokens = swin_block(g, tokens, stage, block, train_mode, dropout_rng);
    if (stage < 3) {
      tokens = patch_merging(g, tokens, stage);
      if (trace) trace->emplace_back(g.shape(tokens)[0], g.shape(tokens)[1]);
    }
  }
  return token_semantic_head(g, tokens);
}

ag::Value Model::forward(ag::Graph& g, const std::vector<Tensor>& images,
                         fusion::Mode mode, bool train_mode, Rng* dropout_rng,
                         ShapeTrace* trace) const {
  if (images.empty()) raise("format", "forward needs at least one image");
  ag::Value tokens;
  if (mode == fusion::Mode::kSumPatchEmbed) {
    tokens = fusion::sum_patch_embed(g, images, *this);
  } else {
    if (images.size() != 1)
      raise("format", "single/avg_mel forward expects one fused image");
    tokens = patch_embed(g, images[0]);
  }
  return backbone_and_head(g, tokens, train_mode, dropout_rng, trace);
}

void save_model_checkpoint(const std::string& path, const Model& model,
                           fusion::Mode mode, Dtype dtype) {
  nlohmann::json meta;
  meta["format"] = "mmser-checkpoint";
  meta["model"] = nlohmann::json::parse(model.config().to_json());
  meta["fusion"] = fusion::to_string(mode);
  save_checkpoint(path, meta.dump(), model.params(), dtype);
}

LoadedModel load_model_checkpoint(const std::string& path) {
  Checkpoint ck = load_checkpoint(path);
  nlohmann::json meta = nlohmann::json::parse(ck.meta_json);
  if (meta.value("format", "") != "mmser-checkpoint")
    raise("format", "not a model checkpoint: " + path);

  LoadedModel out;
  out.mode = fusion::mode_from_string(meta.at("fusion").get<std::string>());
  ModelConfig config = ModelConfig::from_json(meta.at("model").dump());
  out.model = std::make_unique<Model>(config, 0);

  ParamStore& store = out.model->params();
  if (static_cast<int>(ck.tensors.size()) != store.size())
    raise("config_mismatch", "checkpoint parameter count differs: depths");
  for (auto& [name, tensor] : ck.tensors) {
    const int idx = store.find(name);
    if (!store.at(idx).value.same_shape(tensor))
      raise("config_mismatch", "checkpoint tensor shape differs: " + name);
    store.at(idx).value = std::move(tensor);
  }
  return out;
}

}  // namespace mmser::nn
