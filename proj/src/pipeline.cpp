// Copyright 2026 The mmser Authors
//
// Licensed under the Apache License, Version 2.0

#include "mmser/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mmser/room.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mmser::pipe {

std::string RunConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["fusion"] = fusion;
  j["train_mics"] = train_mics;
  j["eval_mics"] = eval_mics;
  j["model"] = json::parse(model.to_json());
  j["train"] = {{"lr", tcfg.lr},
                {"batch_size", tcfg.batch_size},
                {"max_epochs", tcfg.max_epochs},
                {"patience", tcfg.patience},
                {"warmup_steps", tcfg.warmup_steps}};
  json a;
  a["n_time_masks"] = masks.n_time_masks;
  a["max_time_width"] = masks.max_time_width;
  a["n_freq_masks"] = masks.n_freq_masks;
  a["max_freq_width"] = masks.max_freq_width;
  if (masks.fill.has_value())
    a["fill"] = *masks.fill;
  else
    a["fill"] = "mean";
  j["augment"] = a;
  j["sim"] = {{"t60_min", t60_min},
              {"t60_max", t60_max},
              {"augment_factor", sim_augment_factor},
              {"retries", sim_retries}};
  j["cache_dir"] = cache_dir;
  return j.dump(2);
}

RunConfig RunConfig::from_json(const std::string& text) {
  json j = json::parse(text);
  RunConfig c;
  c.seed = j.value("seed", c.seed);
  c.fusion = j.value("fusion", c.fusion);
  fusion::mode_from_string(c.fusion);  // validates
  c.train_mics = j.value("train_mics", c.train_mics);
  c.eval_mics = j.value("eval_mics", c.eval_mics);
  if (c.train_mics < 1 || c.eval_mics < 1) raise("format", "mic counts must be >= 1");
  if (j.contains("model")) c.model = nn::ModelConfig::from_json(j.at("model").dump());
  if (j.contains("train")) {
    const json& t = j.at("train");
    c.tcfg.lr = t.value("lr", c.tcfg.lr);
    c.tcfg.batch_size = t.value("batch_size", c.tcfg.batch_size);
    c.tcfg.max_epochs = t.value("max_epochs", c.tcfg.max_epochs);
    c.tcfg.patience = t.value("patience", c.tcfg.patience);
    c.tcfg.warmup_steps = t.value("warmup_steps", c.tcfg.warmup_steps);
  }
  if (j.contains("augment")) {
    const json& a = j.at("augment");
    c.masks.n_time_masks = a.value("n_time_masks", c.masks.n_time_masks);
    c.masks.max_time_width = a.value("max_time_width", c.masks.max_time_width);
    c.masks.n_freq_masks = a.value("n_freq_masks", c.masks.n_freq_masks);
    c.masks.max_freq_width = a.value("max_freq_width", c.masks.max_freq_width);
    if (a.contains("fill") && a.at("fill").is_number())
      c.masks.fill = a.at("fill").get<double>();
  }
  if (j.contains("sim")) {
    const json& s = j.at("sim");
    c.t60_min = s.value("t60_min", c.t60_min);
    c.t60_max = s.value("t60_max", c.t60_max);
    c.sim_augment_factor = s.value("augment_factor", c.sim_augment_factor);
    c.sim_retries = s.value("retries", c.sim_retries);
  }
  c.cache_dir = j.value("cache_dir", c.cache_dir);
  c.tcfg.seed = c.seed;
  c.tcfg.validate();
  return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise("io", "cannot open config: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

data::Manifest cmd_simulate(const data::Manifest& source, const RunConfig& config,
                            const std::string& out_dir) {
  fs::create_directories(fs::path(out_dir) / "clips");
  fs::create_directories(fs::path(out_dir) / "scenes");
  const int factor = std::max(1, config.sim_augment_factor);
  const int64_t n_jobs = static_cast<int64_t>(source.rows.size()) * factor;

  std::vector<data::ManifestRow> out_rows(static_cast<size_t>(n_jobs));
  std::vector<std::string> errors(static_cast<size_t>(n_jobs));

#pragma omp parallel for schedule(dynamic)
  for (int64_t job = 0; job < n_jobs; ++job) {
    const int64_t row_idx = job / factor;
    const int64_t copy = job % factor;
    const data::ManifestRow& row = source.rows[static_cast<size_t>(row_idx)];
    try {
      const uint64_t stream_id = static_cast<uint64_t>(job) + 1;
      Rng rng = Rng::stream(config.seed, stream_id);

      room::RoomScene scene;
      room::RIRSet rirs;
      bool done = false;
      for (int attempt = 0; attempt < config.sim_retries && !done; ++attempt) {
        scene = room::sample_room(rng, config.t60_min, config.t60_max,
                                  config.train_mics);
        scene.seed = stream_id;
        try {
          rirs = room::image_source_rir(scene);
          done = true;
        } catch (const Error& e) {
          if (e.code() != std::string("infeasible")) throw;
        }
      }
      if (!done) raise("infeasible", "no feasible scene after retries for " + row.clip_path);

      const dsp::AudioClip dry = dsp::read_wav(row.clip_path);
      const dsp::AudioClip wet = room::convolve_multichannel(dry.channels[0], rirs);

      const std::string stem = fs::path(row.clip_path).stem().string() + "_s" +
                               std::to_string(copy);
      const std::string clip_path = (fs::path(out_dir) / "clips" / (stem + ".wav")).string();
      const std::string scene_path =
          (fs::path(out_dir) / "scenes" / (stem + ".json")).string();
      dsp::write_wav(clip_path, wet);
      std::ofstream sj(scene_path);
      sj << scene.to_json() << '\n';

      out_rows[static_cast<size_t>(job)] = {clip_path, row.label, row.split, scene_path};
    } catch (const Error& e) {
      errors[static_cast<size_t>(job)] = std::string(e.code()) + ": " + e.what();
    } catch (const std::exception& e) {
      errors[static_cast<size_t>(job)] = std::string("internal: ") + e.what();
    }
  }

  for (const auto& err : errors)
    if (!err.empty()) raise("internal", "simulation failed: " + err);

  data::Manifest out;
  out.rows = std::move(out_rows);
  out.save((fs::path(out_dir) / "manifest.csv").string());
  return out;
}

namespace {

std::vector<dsp::MelSpectrogram> unpack_channels(const Tensor& feats) {
  std::vector<dsp::MelSpectrogram> mels;
  const int64_t m = feats.shape[0];
  const int64_t per = feats.shape[1] * feats.shape[2];
  mels.reserve(static_cast<size_t>(m));
  for (int64_t c = 0; c < m; ++c) {
    dsp::MelSpectrogram mel({feats.shape[1], feats.shape[2]});
    std::copy_n(feats.data.begin() + c * per, per, mel.data.begin());
    mels.push_back(std::move(mel));
  }
  return mels;
}

// Parallel featurization with slot-indexed outputs (deterministic order).
std::vector<train::Example> featurize_rows(const data::Manifest& manifest,
                                           const std::vector<int>& row_ids,
                                           const std::map<std::string, int>& label_to_idx,
                                           int use_mics, const std::string& cache_dir) {
  std::vector<train::Example> out(row_ids.size());
  std::vector<std::string> errors(row_ids.size());
#pragma omp parallel for schedule(dynamic)
  for (size_t i = 0; i < row_ids.size(); ++i) {
    const auto& row = manifest.rows[static_cast<size_t>(row_ids[i])];
    try {
      out[i].mels = unpack_channels(data::featurize_clip(row.clip_path, use_mics, cache_dir));
      out[i].label = label_to_idx.at(row.label);
    } catch (const Error& e) {
      errors[i] = std::string(e.code()) + ": " + e.what();
    } catch (const std::exception& e) {
      errors[i] = std::string("internal: ") + e.what();
    }
  }
  for (const auto& err : errors)
    if (!err.empty()) raise("internal", "featurization failed: " + err);
  return out;
}

std::map<std::string, int> label_index(const std::vector<std::string>& classes) {
  std::map<std::string, int> idx;
  for (size_t i = 0; i < classes.size(); ++i) idx[classes[i]] = static_cast<int>(i);
  return idx;
}

}  // namespace

void cmd_featurize(const data::Manifest& manifest, const RunConfig& config,
                   int use_mics) {
  if (config.cache_dir.empty())
    raise("format", "featurize needs cache_dir in the config");
  std::vector<int> all(manifest.rows.size());
  for (size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  std::map<std::string, int> labels;
  for (const auto& r : manifest.rows) labels.emplace(r.label, 0);
  int next = 0;
  for (auto& [k, v] : labels) v = next++;
  featurize_rows(manifest, all, labels, use_mics, config.cache_dir);
}

TrainOutput cmd_train(const data::Manifest& manifest, const RunConfig& config,
                      const std::string& out_dir, bool record_wall_ms) {
  fs::create_directories(out_dir);
  const auto classes = manifest.class_names();
  if (static_cast<int>(classes.size()) != config.model.n_classes)
    raise("config_mismatch",
          "checkpoint/config mismatch: n_classes (config " +
              std::to_string(config.model.n_classes) + ", manifest " +
              std::to_string(classes.size()) + ")");
  const auto labels = label_index(classes);
  const int mics = config.mics_used(true);

  train::Dataset ds;
  ds.n_classes = static_cast<int>(classes.size());
  ds.train = featurize_rows(manifest, manifest.rows_of_split("train"), labels, mics,
                            config.cache_dir);
  ds.val = featurize_rows(manifest, manifest.rows_of_split("val"), labels, mics,
                          config.cache_dir);

  nn::Model model(config.model, config.seed);
  const fusion::Mode mode = config.mode();
  train::TrainResult result =
      train::train_loop(ds, model, mode, config.tcfg, config.masks, record_wall_ms);
  model.params().restore(result.best_params);

  TrainOutput out;
  out.best_val_acc = result.best_val_acc;
  out.best_epoch = result.best_epoch;
  out.epochs_run = static_cast<int>(result.log.size());
  out.checkpoint_path = (fs::path(out_dir) / "checkpoint.mmck").string();
  out.log_path = (fs::path(out_dir) / "train_log.jsonl").string();

  json meta;
  meta["format"] = "mmser-checkpoint";
  meta["model"] = json::parse(model.config().to_json());
  meta["fusion"] = fusion::to_string(mode);
  meta["classes"] = classes;
  meta["best_val_acc"] = result.best_val_acc;
  meta["best_epoch"] = result.best_epoch;
  meta["seed"] = config.seed;
  save_checkpoint(out.checkpoint_path, meta.dump(), model.params(), Dtype::f64);
  train::write_log_jsonl(out.log_path, result.log);
  return out;
}

namespace {
std::string t60_bucket(const std::string& scene_ref) {
  if (scene_ref.empty()) return "unknown";
  std::ifstream in(scene_ref);
  if (!in) return "unknown";
  std::ostringstream buf;
  buf << in.rdbuf();
  const double t60 = room::RoomScene::from_json(buf.str()).t60_target;
  if (t60 < 0.4) return "t60 0.2-0.4";
  if (t60 < 0.6) return "t60 0.4-0.6";
  return "t60 0.6-0.8";
}
}  // namespace

EvalOutput cmd_eval(const std::string& checkpoint_path, const data::Manifest& manifest,
                    const RunConfig& config, const std::string& out_dir,
                    const std::string& split, const std::string& group_by,
                    bool check_model_config) {
  fs::create_directories(out_dir);
  Checkpoint ck = load_checkpoint(checkpoint_path);
  json meta = json::parse(ck.meta_json);
  if (meta.value("format", "") != "mmser-checkpoint")
    raise("format", "not a model checkpoint: " + checkpoint_path);
  const nn::ModelConfig model_config = nn::ModelConfig::from_json(meta.at("model").dump());
  if (check_model_config) {
    const std::string field = model_config.incompatibility(config.model);
    if (!field.empty())
      raise("config_mismatch", "checkpoint/config mismatch: " + field);
  }

  nn::Model model(model_config, 0);
  ParamStore& store = model.params();
  if (static_cast<int>(ck.tensors.size()) != store.size())
    raise("config_mismatch", "checkpoint/config mismatch: depths");
  for (auto& [name, tensor] : ck.tensors) {
    const int idx = store.find(name);
    if (!store.at(idx).value.same_shape(tensor))
      raise("config_mismatch", "checkpoint/config mismatch: " + name);
    store.at(idx).value = std::move(tensor);
  }

  const fusion::Mode mode = fusion::mode_from_string(meta.at("fusion").get<std::string>());
  const auto classes = meta.at("classes").get<std::vector<std::string>>();
  const auto labels = label_index(classes);
  for (const auto& row : manifest.rows)
    if (!labels.count(row.label))
      raise("config_mismatch",
            "manifest label '" + row.label + "' unknown to the checkpoint");

  const auto row_ids = manifest.rows_of_split(split);
  if (row_ids.empty()) raise("format", "no rows in split '" + split + "'");
  const int mics = mode == fusion::Mode::kSingle ? 1 : config.eval_mics;
  const auto examples = featurize_rows(manifest, row_ids, labels, mics, config.cache_dir);

  std::vector<std::vector<double>> logits(examples.size());
#pragma omp parallel for schedule(dynamic)
  for (size_t i = 0; i < examples.size(); ++i)
    logits[i] = train::predict_logits(model, mode, examples[i].mels);

  EvalOutput out;
  out.n = static_cast<int64_t>(examples.size());
  out.predictions_path = (fs::path(out_dir) / "predictions.jsonl").string();
  out.summary_path = (fs::path(out_dir) / "eval_summary.json").string();

  std::ofstream pred(out.predictions_path);
  if (!pred) raise("io", "cannot open for write: " + out.predictions_path);
  int64_t correct_total = 0;
  std::map<std::string, std::vector<double>> per_condition;  // correctness
  std::vector<std::string> condition_order;
  for (size_t i = 0; i < examples.size(); ++i) {
    const auto& row = manifest.rows[static_cast<size_t>(row_ids[i])];
    const int pred_label = eval::argmax(logits[i]);
    const bool ok = pred_label == examples[i].label;
    correct_total += ok ? 1 : 0;

    json rec;
    rec["clip_id"] = row.clip_path;
    rec["label"] = examples[i].label;
    rec["logits"] = logits[i];
    rec["pred"] = pred_label;
    pred << rec.dump() << '\n';

    const std::string cond = group_by == "t60" ? t60_bucket(row.scene_ref) : "all";
    if (!per_condition.count(cond)) condition_order.push_back(cond);
    per_condition[cond].push_back(ok ? 1.0 : 0.0);
  }
  out.overall_accuracy =
      static_cast<double>(correct_total) / static_cast<double>(examples.size());

  const std::string variant = fusion::to_string(mode);
  for (const auto& cond : condition_order) {
    const auto& correctness = per_condition[cond];
    eval::EvalResult r;
    r.condition = cond;
    r.variant = variant;
    r.n = static_cast<int64_t>(correctness.size());
    r.correct = static_cast<int64_t>(
        std::count(correctness.begin(), correctness.end(), 1.0));
    r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.n);
    std::tie(r.ci_low, r.ci_high) = eval::bootstrap_ci(correctness, 1000, 0.95, config.seed);
    out.results.push_back(std::move(r));
  }

  json summary;
  summary["variant"] = variant;
  summary["split"] = split;
  summary["val_acc"] = meta.value("best_val_acc", 0.0);
  summary["overall_accuracy"] = out.overall_accuracy;
  summary["n"] = out.n;
  summary["results"] = json::array();
  for (const auto& r : out.results)
    summary["results"].push_back({{"condition", r.condition},
                                  {"n", r.n},
                                  {"correct", r.correct},
                                  {"accuracy", r.accuracy},
                                  {"ci_low", r.ci_low},
                                  {"ci_high", r.ci_high}});
  std::ofstream sum(out.summary_path);
  sum << summary.dump(2) << '\n';
  return out;
}

std::string cmd_report(const std::vector<std::string>& summary_paths,
                       const std::string& out_prefix, int top_k) {
  if (summary_paths.empty()) raise("format", "report needs at least one summary");
  if (top_k < 1) raise("format", "top_k must be >= 1");

  struct ModelSummary {
    std::string variant;
    double val_acc;
    std::vector<eval::EvalResult> results;
  };
  std::vector<ModelSummary> models;
  std::vector<std::string> variant_order;
  for (const auto& path : summary_paths) {
    std::ifstream in(path);
    if (!in) raise("io", "cannot open summary: " + path);
    json j = json::parse(in);
    ModelSummary m;
    m.variant = j.at("variant").get<std::string>();
    m.val_acc = j.value("val_acc", 0.0);
    for (const auto& r : j.at("results")) {
      eval::EvalResult er;
      er.condition = r.at("condition").get<std::string>();
      er.variant = m.variant;
      er.n = r.at("n").get<int64_t>();
      er.correct = r.value("correct", static_cast<int64_t>(0));
      er.accuracy = r.at("accuracy").get<double>();
      er.ci_low = r.at("ci_low").get<double>();
      er.ci_high = r.at("ci_high").get<double>();
      m.results.push_back(std::move(er));
    }
    if (std::find(variant_order.begin(), variant_order.end(), m.variant) ==
        variant_order.end())
      variant_order.push_back(m.variant);
    models.push_back(std::move(m));
  }

  // top-k models per variant by validation accuracy, averaged per condition
  std::vector<eval::EvalResult> merged;
  for (const auto& variant : variant_order) {
    std::vector<const ModelSummary*> group;
    for (const auto& m : models)
      if (m.variant == variant) group.push_back(&m);
    std::stable_sort(group.begin(), group.end(),
                     [](const ModelSummary* a, const ModelSummary* b) {
                       return a->val_acc > b->val_acc;
                     });
    if (static_cast<int>(group.size()) > top_k) group.resize(static_cast<size_t>(top_k));

    std::map<std::string, eval::EvalResult> agg;
    std::vector<std::string> conds;
    std::map<std::string, int> counts;
    for (const ModelSummary* m : group)
      for (const auto& r : m->results) {
        if (!agg.count(r.condition)) {
          conds.push_back(r.condition);
          agg[r.condition] = r;
          counts[r.condition] = 1;
        } else {
          eval::EvalResult& dst = agg[r.condition];
          dst.accuracy += r.accuracy;
          dst.ci_low += r.ci_low;
          dst.ci_high += r.ci_high;
          counts[r.condition] += 1;
        }
      }
    for (const auto& cond : conds) {
      eval::EvalResult r = agg[cond];
      const double inv = 1.0 / counts[cond];
      r.accuracy *= inv;
      r.ci_low *= inv;
      r.ci_high *= inv;
      merged.push_back(std::move(r));
    }
  }

  const std::string table = eval::render_table(merged, variant_order);
  std::ofstream txt(out_prefix + ".txt");
  txt << table;
  std::ofstream csv(out_prefix + ".csv");
  csv << eval::render_csv(merged, variant_order);
  return table;
}

}  // namespace mmser::pipe
