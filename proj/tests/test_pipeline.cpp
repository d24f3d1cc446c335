// Copyright 2026 The mmser Authors
//
// Licensed under the Apache License, Version 2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "mmser/common.hpp"
#include "mmser/kernels.hpp"
#include "mmser/pipeline.hpp"
#include "mmser/room.hpp"

namespace fs = std::filesystem;
using namespace mmser;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "mmser_test_pipeline" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

pipe::RunConfig tiny_run_config(int n_classes) {
  pipe::RunConfig cfg;
  cfg.seed = 7;
  cfg.fusion = "single";
  cfg.train_mics = 2;
  cfg.eval_mics = 2;
  cfg.model.base_dim = 8;
  cfg.model.depths = {1, 1, 1, 1};
  cfg.model.heads = {1, 2, 4, 8};
  cfg.model.n_classes = n_classes;
  cfg.tcfg.batch_size = 4;
  cfg.tcfg.max_epochs = 2;
  cfg.tcfg.patience = 2;
  cfg.tcfg.warmup_steps = 0;
  cfg.t60_min = 0.2;
  cfg.t60_max = 0.3;  // small lattices keep simulation quick
  cfg.sim_augment_factor = 1;
  return cfg;
}

uint64_t hash_file(const std::string& path) { return data::file_content_hash(path); }

}  // namespace

TEST_CASE("toy corpus: balance, splits, dominant frequency, determinism") {
  const auto dir_a = fresh_dir("toy_a");
  data::ToyConfig tc;
  tc.n_classes = 4;
  tc.n_per_class = 10;
  tc.duration_s = 0.6;
  tc.seed = 5;
  const data::Manifest manifest = data::generate_toy_corpus(tc, dir_a.string());

  REQUIRE(manifest.rows.size() == 40);
  std::map<std::string, int> label_counts;
  std::map<std::string, int> split_counts;
  for (const auto& r : manifest.rows) {
    label_counts[r.label]++;
    split_counts[r.split]++;
  }
  REQUIRE(label_counts.size() == 4);
  for (const auto& [label, count] : label_counts) CHECK(count == 10);
  CHECK(split_counts["train"] == 32);
  CHECK(split_counts["val"] == 4);
  CHECK(split_counts["test"] == 4);

  // dominant FFT bin within 2 bins of f0_k
  for (int k = 0; k < 4; ++k) {
    const std::string path = (dir_a / "clips" / ("toy_c" + std::to_string(k) + "_0.wav")).string();
    const dsp::AudioClip clip = dsp::read_wav(path);
    std::vector<std::complex<double>> buf(16384);
    for (size_t i = 0; i < clip.channels[0].size() && i < buf.size(); ++i)
      buf[i] = clip.channels[0][i];
    kernels::fft(buf, false);
    int argpeak = 1;
    double best = 0.0;
    for (int b = 1; b < 8192; ++b)
      if (std::abs(buf[static_cast<size_t>(b)]) > best) {
        best = std::abs(buf[static_cast<size_t>(b)]);
        argpeak = b;
      }
    const double f0 = 110.0 * std::pow(2.0, k / 4.0);
    const double bin_hz = 16000.0 / 16384.0;
    CHECK(std::abs(argpeak * bin_hz - f0) <= 2.0 * bin_hz + f0 * 0.004);
  }

  // same seed, fresh directory -> identical corpus bytes
  const auto dir_b = fresh_dir("toy_b");
  data::generate_toy_corpus(tc, dir_b.string());
  for (const auto& r : manifest.rows) {
    const fs::path rel = fs::relative(r.clip_path, dir_a);
    CHECK(hash_file(r.clip_path) == hash_file((dir_b / rel).string()));
  }
}

TEST_CASE("manifest split discipline and missing files") {
  const auto dir = fresh_dir("manifest");
  dsp::AudioClip clip;
  clip.channels = {std::vector<double>(2000, 0.1)};
  dsp::write_wav((dir / "a.wav").string(), clip);

  data::Manifest m;
  m.rows.push_back({(dir / "a.wav").string(), "c0", "train", ""});
  m.rows.push_back({(dir / "a.wav").string(), "c0", "test", ""});
  CHECK_THROWS_AS(m.validate(true), Error);

  data::Manifest missing;
  missing.rows.push_back({(dir / "nope.wav").string(), "c0", "train", ""});
  CHECK_THROWS_AS(missing.validate(true), Error);

  data::Manifest bad_split;
  bad_split.rows.push_back({(dir / "a.wav").string(), "c0", "holdout", ""});
  CHECK_THROWS_AS(bad_split.validate(true), Error);

  // round trip with relative paths
  data::Manifest good;
  good.rows.push_back({(dir / "a.wav").string(), "c0", "train", ""});
  good.save((dir / "manifest.csv").string());
  const data::Manifest loaded = data::Manifest::load((dir / "manifest.csv").string());
  REQUIRE(loaded.rows.size() == 1);
  CHECK(fs::equivalent(loaded.rows[0].clip_path, dir / "a.wav"));
}

TEST_CASE("simulate: counts, channels, durations, scene manifests") {
  const auto dir = fresh_dir("sim");
  data::ToyConfig tc;
  tc.n_classes = 2;
  tc.n_per_class = 3;
  tc.duration_s = 0.4;
  tc.seed = 9;
  const data::Manifest dry = data::generate_toy_corpus(tc, (dir / "dry").string());

  pipe::RunConfig cfg = tiny_run_config(2);
  const data::Manifest wet = pipe::cmd_simulate(dry, cfg, (dir / "wet").string());

  REQUIRE(wet.rows.size() == dry.rows.size());  // augmentation factor 1
  for (size_t i = 0; i < wet.rows.size(); ++i) {
    const auto& row = wet.rows[i];
    CHECK(row.label == dry.rows[i].label);
    CHECK(row.split == dry.rows[i].split);

    const dsp::AudioClip clip = dsp::read_wav(row.clip_path);
    CHECK(clip.num_channels() == 2);

    REQUIRE(!row.scene_ref.empty());
    std::ifstream sj(row.scene_ref);
    std::ostringstream buf;
    buf << sj.rdbuf();
    const room::RoomScene scene = room::RoomScene::from_json(buf.str());
    CHECK_NOTHROW(scene.validate());
    const int64_t rir_len = static_cast<int64_t>(std::ceil(scene.t60_target * 16000.0));
    CHECK(clip.num_samples() == 6400 + rir_len - 1);
  }

  // deterministic rerun
  const data::Manifest wet2 = pipe::cmd_simulate(dry, cfg, (dir / "wet2").string());
  for (size_t i = 0; i < wet.rows.size(); ++i)
    CHECK(hash_file(wet.rows[i].clip_path) == hash_file(wet2.rows[i].clip_path));
}

TEST_CASE("tensor file round trip: f64 bit-exact, f32 declared") {
  const auto dir = fresh_dir("tensors");
  Rng rng(10);
  Tensor t({3, 5, 2});
  for (auto& v : t.data) v = rng.uniform(-100.0, 100.0);

  const std::string p64 = (dir / "t64.mmtn").string();
  save_tensor(p64, t, Dtype::f64);
  Dtype dtype;
  const Tensor back = load_tensor(p64, &dtype);
  CHECK(dtype == Dtype::f64);
  CHECK(back.shape == t.shape);
  CHECK(back.data == t.data);  // bit exact

  const std::string p32 = (dir / "t32.mmtn").string();
  save_tensor(p32, t, Dtype::f32);
  const Tensor back32 = load_tensor(p32, &dtype);
  CHECK(dtype == Dtype::f32);
  for (int64_t i = 0; i < t.numel(); ++i)
    CHECK(back32.data[static_cast<size_t>(i)] ==
          static_cast<double>(static_cast<float>(t.data[static_cast<size_t>(i)])));

  std::ofstream bad((dir / "bad.mmtn").string(), std::ios::binary);
  bad << "NOPE";
  bad.close();
  CHECK_THROWS_AS(load_tensor((dir / "bad.mmtn").string()), Error);
}

TEST_CASE("feature cache returns identical features and hits on the second call") {
  const auto dir = fresh_dir("cache");
  data::ToyConfig tc;
  tc.n_classes = 2;
  tc.n_per_class = 1;
  tc.duration_s = 0.4;
  tc.seed = 11;
  const data::Manifest m = data::generate_toy_corpus(tc, (dir / "corpus").string());

  const std::string cache = (dir / "cache").string();
  const Tensor first = data::featurize_clip(m.rows[0].clip_path, 1, cache);
  REQUIRE(fs::exists(cache));
  size_t files = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(cache)) ++files;
  CHECK(files == 1);
  const Tensor second = data::featurize_clip(m.rows[0].clip_path, 1, cache);
  CHECK(first.data == second.data);
  CHECK(first.shape == std::vector<int64_t>({1, (6400 - 1024) / 160 + 1, 64}));

  CHECK_THROWS_AS(data::featurize_clip(m.rows[0].clip_path, 3, ""), Error);
}

TEST_CASE("run config JSON round trip") {
  pipe::RunConfig cfg = tiny_run_config(4);
  cfg.masks.fill = -3.5;
  const pipe::RunConfig back = pipe::RunConfig::from_json(cfg.to_json());
  CHECK(back.seed == cfg.seed);
  CHECK(back.fusion == cfg.fusion);
  CHECK(back.train_mics == cfg.train_mics);
  CHECK(back.model.base_dim == 8);
  CHECK(back.model.depths == cfg.model.depths);
  CHECK(back.tcfg.batch_size == 4);
  CHECK(back.masks.fill.has_value());
  CHECK(*back.masks.fill == -3.5);
  CHECK(back.t60_max == 0.3);

  pipe::RunConfig mean_fill = tiny_run_config(4);
  const pipe::RunConfig back2 = pipe::RunConfig::from_json(mean_fill.to_json());
  CHECK(!back2.masks.fill.has_value());

  CHECK_THROWS_AS(pipe::RunConfig::from_json("{\"fusion\": \"bogus\"}"), Error);
}

TEST_CASE("train/eval pipeline: determinism, mismatch naming, M=1 sum_pe eval") {
  const auto dir = fresh_dir("endtoend");
  data::ToyConfig tc;
  tc.n_classes = 3;
  tc.n_per_class = 6;
  tc.duration_s = 0.4;
  tc.seed = 13;
  const data::Manifest corpus = data::generate_toy_corpus(tc, (dir / "corpus").string());

  pipe::RunConfig cfg = tiny_run_config(3);
  cfg.fusion = "sum_pe";
  cfg.train_mics = 1;  // mono corpus
  cfg.eval_mics = 1;
  cfg.cache_dir = (dir / "cache").string();

  const pipe::TrainOutput t1 = pipe::cmd_train(corpus, cfg, (dir / "run1").string(),
                                               /*record_wall_ms=*/false);
  const pipe::TrainOutput t2 = pipe::cmd_train(corpus, cfg, (dir / "run2").string(),
                                               /*record_wall_ms=*/false);
  CHECK(hash_file(t1.checkpoint_path) == hash_file(t2.checkpoint_path));
  CHECK(hash_file(t1.log_path) == hash_file(t2.log_path));

  // eval twice -> byte-identical predictions; sum_pe runs at M_eval=1
  const pipe::EvalOutput e1 =
      pipe::cmd_eval(t1.checkpoint_path, corpus, cfg, (dir / "eval1").string());
  const pipe::EvalOutput e2 =
      pipe::cmd_eval(t1.checkpoint_path, corpus, cfg, (dir / "eval2").string());
  CHECK(hash_file(e1.predictions_path) == hash_file(e2.predictions_path));
  REQUIRE(e1.results.size() == 1);
  CHECK(e1.results[0].condition == "all");
  CHECK(e1.results[0].n == 3);  // one test clip per class
  CHECK(e1.results[0].ci_low <= e1.results[0].accuracy);
  CHECK(e1.results[0].ci_high >= e1.results[0].accuracy);

  // config with a different architecture is rejected by field name
  pipe::RunConfig other = cfg;
  other.model.base_dim = 16;
  try {
    pipe::cmd_eval(t1.checkpoint_path, corpus, other, (dir / "eval3").string(), "test",
                   "none", /*check_model_config=*/true);
    FAIL("expected config_mismatch");
  } catch (const Error& e) {
    CHECK(e.code() == "config_mismatch");
    CHECK(std::string(e.what()).find("base_dim") != std::string::npos);
  }

  // label unknown to the checkpoint
  data::Manifest alien = corpus;
  alien.rows[0].label = "zz";
  CHECK_THROWS_AS(
      pipe::cmd_eval(t1.checkpoint_path, alien, cfg, (dir / "eval4").string()), Error);

  // report renders one column group per variant
  const std::string table = pipe::cmd_report({e1.summary_path}, (dir / "report").string(), 1);
  CHECK(table.find("sum_pe") != std::string::npos);
  CHECK(table.find("all") != std::string::npos);
  CHECK(fs::exists((dir / "report").string() + ".csv"));
  CHECK(fs::exists((dir / "report").string() + ".txt"));
}

TEST_CASE("cmd_train rejects class-count mismatches") {
  const auto dir = fresh_dir("mismatch");
  data::ToyConfig tc;
  tc.n_classes = 2;
  tc.n_per_class = 5;
  tc.duration_s = 0.4;
  tc.seed = 15;
  const data::Manifest corpus = data::generate_toy_corpus(tc, (dir / "corpus").string());

  pipe::RunConfig cfg = tiny_run_config(4);  // model says 4, corpus has 2
  try {
    pipe::cmd_train(corpus, cfg, (dir / "run").string(), false);
    FAIL("expected config_mismatch");
  } catch (const Error& e) {
    CHECK(e.code() == "config_mismatch");
    CHECK(std::string(e.what()).find("n_classes") != std::string::npos);
  }
}
