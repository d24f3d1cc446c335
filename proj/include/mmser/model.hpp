// Copyright 2026 The mmser Authors
// Hierarchical windowed-attention transformer classifier: convolutional
// patch embed, four groups of shifted-window blocks with patch merging
// between them, and a token-semantic conv head pooled to class logits.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "mmser/autograd.hpp"
#include "mmser/fusion.hpp"
#include "mmser/params.hpp"

namespace mmser::nn {

struct ModelConfig {
  int patch_size = 4;
  int attn_window = 8;
  std::array<int, 4> depths = {2, 2, 6, 2};  // halved variant: {1, 1, 3, 1}
  int base_dim = 96;
  std::array<int, 4> heads = {3, 6, 12, 24};
  int mlp_ratio = 4;
  int n_classes = 7;
  int input_size = fusion::kImageSide;
  double dropout = 0.0;
  double drop_path = 0.0;

  int stage_dim(int g) const { return base_dim << g; }
  int stage_grid(int g) const { return input_size / patch_size >> g; }
  int stage_window(int g) const { return std::min(attn_window, stage_grid(g)); }

  void validate() const;
  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
  bool operator==(const ModelConfig&) const = default;

  // Field-by-field comparison; returns the name of the first architecture
  // field that differs, or empty when compatible.
  std::string incompatibility(const ModelConfig& other) const;
};

// Token count / dim after the embed and after each merge.
using ShapeTrace = std::vector<std::pair<int64_t, int64_t>>;

class Model {
 public:
  Model(ModelConfig config, uint64_t init_seed);

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // Single-example forward over per-channel mel images (already fused
  // images for single/avg modes hold exactly one entry). Returns logits of
  // length n_classes. `dropout_rng` is consulted only in train mode with
  // nonzero dropout/drop-path rates.
  ag::Value forward(ag::Graph& g, const std::vector<Tensor>& images,
                    fusion::Mode mode, bool train_mode = false,
                    Rng* dropout_rng = nullptr, ShapeTrace* trace = nullptr) const;

  // Patch embed for one 2-D image tensor: (grid^2, base_dim) tokens.
  ag::Value patch_embed(ag::Graph& g, const Tensor& image) const;

  // Attention sublayer of one block: windowed multi-head self-attention
  // with relative-position bias (cyclically shifted and masked when
  // shift > 0), followed by the output projection.
  ag::Value window_attention(ag::Graph& g, ag::Value tokens, int stage, int block,
                             int shift) const;
  ag::Value swin_block(ag::Graph& g, ag::Value tokens, int stage, int block,
                       bool train_mode, Rng* dropout_rng) const;
  ag::Value patch_merging(ag::Graph& g, ag::Value tokens, int stage) const;
  ag::Value token_semantic_head(ag::Graph& g, ag::Value tokens) const;

  ag::Value backbone_and_head(ag::Graph& g, ag::Value tokens, bool train_mode,
                              Rng* dropout_rng, ShapeTrace* trace) const;

 private:
  struct StagePlan {
    ag::IndexMap qkv[2][3];       // [shifted][q/k/v]: (nW*h, w^2, dh) from (T, 3d)
    ag::IndexMap merge_back[2];   // (T, d) from (nW*h, w^2, dh)
    std::shared_ptr<const Tensor> shift_mask;  // (nW, w^2, w^2), nullptr if unshifted
    ag::IndexMap relpos;          // (h, w^2, w^2) from the bias table
    ag::IndexMap patch_merge;     // (T/4, 4d) from (T, d)
  };

  void build_params(uint64_t seed);
  void build_plans();

  ModelConfig config_;
  ParamStore params_;
  ag::IndexMap embed_cols_;  // (grid^2, patch^2) im2col of the input image
  ag::IndexMap head_cols_;   // (g3^2, 9*dim3) im2col for the 3x3 head conv
  std::array<StagePlan, 4> plans_;
};

// Builds meta JSON ({"model": config, "fusion": mode}) and writes/reads it
// plus all parameters. Mismatched architecture fields raise
// "config_mismatch" naming the field.
void save_model_checkpoint(const std::string& path, const Model& model,
                           fusion::Mode mode, Dtype dtype = Dtype::f64);
struct LoadedModel {
  std::unique_ptr<Model> model;
  fusion::Mode mode;
};
LoadedModel load_model_checkpoint(const std::string& path);

}  // namespace mmser::nn
