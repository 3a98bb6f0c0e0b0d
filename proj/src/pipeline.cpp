#include "itsc/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "itsc/baselines.hpp"
#include "itsc/cnn.hpp"
#include "itsc/digest.hpp"
#include "itsc/error.hpp"
#include "itsc/health.hpp"
#include "itsc/image_io.hpp"
#include "itsc/imaging.hpp"
#include "itsc/rng.hpp"
#include "itsc/signal.hpp"
#include "itsc/sparse.hpp"

namespace itsc::pipeline {

using nlohmann::json;

namespace {

constexpr int kManifestVersion = 1;

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string window_file(std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "w%04zu.pgm", k);
  return buf;
}

}  // namespace

std::vector<Cell> cells(const RunConfig& cfg) {
  std::vector<Cell> out;
  for (const char* split : {"train", "test"})
    for (std::size_t g = 0; g < cfg.fault_grid.size(); ++g)
      out.push_back({g, cfg.fault_grid[g].label, cfg.fault_grid[g].fault_ratio, split});
  return out;
}

// ---------------------------------------------------------------- manifest

Manifest Manifest::load(const fs::path& run_dir) {
  Manifest m;
  const fs::path path = run_dir / "manifest.json";
  if (fs::exists(path)) m.doc_ = read_json(path);
  if (!m.doc_.contains("stages")) m.doc_["stages"] = json::object();
  if (!m.doc_.contains("derived")) m.doc_["derived"] = json::object();
  m.doc_["format_versions"] = {{"manifest", kManifestVersion},
                               {"network_model", 1},
                               {"dictionary", 1},
                               {"baseline", 1},
                               {"image", "pgm-p5-16bit"}};
  return m;
}

void Manifest::save(const fs::path& run_dir) const { write_text(run_dir / "manifest.json", doc_.dump(2) + "\n"); }

bool Manifest::has_stage(const std::string& stage) const { return doc_.at("stages").contains(stage); }

void Manifest::require_stage(const std::string& stage, const std::string& needed_by) const {
  if (!has_stage(stage))
    throw DependencyError("stage '" + stage + "' has not completed; run it before '" + needed_by + "'");
}

void Manifest::record_stage(const std::string& stage, const fs::path& run_dir, const std::vector<fs::path>& files,
                            double seconds) {
  json digests = json::object();
  for (const auto& rel : files) digests[rel.generic_string()] = sha256_file(run_dir / rel);
  doc_["stages"][stage] = {{"files", digests}, {"seconds", seconds}};
}

void Manifest::drop_stages_after(const std::string& stage) {
  bool after = false;
  for (const char* s : kStages) {
    if (after) doc_["stages"].erase(s);
    if (stage == s) after = true;
  }
}

std::map<std::string, std::string> Manifest::stage_files(const std::string& stage) const {
  std::map<std::string, std::string> out;
  if (!has_stage(stage)) return out;
  for (const auto& [k, v] : doc_.at("stages").at(stage).at("files").items()) out[k] = v.get<std::string>();
  return out;
}

std::map<std::string, std::string> Manifest::all_files() const {
  std::map<std::string, std::string> out;
  for (const char* s : kStages)
    for (auto& [k, v] : stage_files(s)) out[k] = v;
  return out;
}

void Manifest::bind_config(const RunConfig& cfg, bool reset) {
  const json snapshot = json::parse(dump_config(cfg));
  if (reset || !doc_.contains("config")) {
    doc_["config"] = snapshot;
    if (reset) {
      doc_["stages"] = json::object();
      doc_["derived"] = json::object();
    }
    return;
  }
  if (doc_.at("config") != snapshot)
    throw ConfigError("config differs from the one recorded in manifest.json; rerun 'simulate' to start a new run");
}

// ---------------------------------------------------------------- simulate

void cmd_simulate(const RunConfig& cfg, const fs::path& out) {
  cfg.validate();
  Stopwatch clock;
  fs::create_directories(out / "signals");
  Manifest manifest = Manifest::load(out);
  manifest.bind_config(cfg, true);

  std::vector<fs::path> files;
  json sidecar = {{"sample_rate", cfg.motor.sample_rate},
                  {"electrical_frequency", cfg.motor.electrical_frequency()},
                  {"faulted_phase", std::string(sim::phase_name(cfg.faulted_phase))},
                  {"cells", json::array()}};
  for (const Cell& c : cells(cfg)) {
    const double duration = c.split == "train" ? cfg.train_duration_s : cfg.test_duration_s;
    const auto seed = derive_seed(cfg.seed, "simulate/" + c.name());
    const auto sig = sim::simulate_currents(cfg.motor, {c.fault_ratio, cfg.faulted_phase}, cfg.noise, duration, seed);
    const fs::path rel = fs::path("signals") / (c.name() + ".csv");
    sim::write_csv(sig, out / rel);
    files.push_back(rel);
    sidecar["cells"].push_back({{"name", c.name()},
                                {"label", c.label},
                                {"fault_ratio", c.fault_ratio},
                                {"split", c.split},
                                {"file", rel.generic_string()},
                                {"samples", sig.size()}});
  }
  write_text(out / "signals" / "signals.json", sidecar.dump(2) + "\n");
  files.emplace_back("signals/signals.json");

  manifest.derived()["electrical_frequency"] = cfg.motor.electrical_frequency();
  manifest.record_stage("simulate", out, files, clock.seconds());
  manifest.save(out);
}

// ---------------------------------------------------------------- image

namespace {

std::vector<std::vector<double>> load_windows(const RunConfig& cfg, const fs::path& out, const Cell& c,
                                              sim::ThreePhaseSignal* keep = nullptr) {
  auto sig = sim::read_csv(out / "signals" / (c.name() + ".csv"), cfg.motor.sample_rate);
  auto windows = sim::window_signal(sig, cfg.window_len, cfg.hop);
  if (keep) *keep = std::move(sig);
  return std::move(windows[static_cast<int>(cfg.imaged_phase)]);
}

std::vector<rp::UnitImage> base_images(const std::vector<std::vector<double>>& windows, const rp::EmbeddingParams& emb,
                                       double clip, std::size_t side) {
  std::vector<rp::UnitImage> images(windows.size());
  const auto n = static_cast<std::ptrdiff_t>(windows.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t k = 0; k < n; ++k) {
    const auto traj = rp::delay_embed(windows[static_cast<std::size_t>(k)], emb);
    images[static_cast<std::size_t>(k)] = rp::normalize_image(rp::clipped_rp_resized(traj, clip, side));
  }
  return images;
}

/// Deterministic sample of `wanted` patches drawn across the given images.
std::vector<sparse::Patch> sample_patches(const std::vector<rp::UnitImage>& images, std::size_t patch_side,
                                          std::size_t stride, std::size_t wanted, std::uint64_t seed) {
  const std::size_t per_image = sparse::patch_count(images.front().side, patch_side, stride);
  const std::size_t per_axis = (images.front().side - patch_side) / stride + 1;
  const std::size_t total = per_image * images.size();
  const std::size_t take = std::min(wanted, total);
  std::vector<std::size_t> order(total);
  for (std::size_t i = 0; i < total; ++i) order[i] = i;
  Rng rng(seed);
  for (std::size_t i = 0; i < take; ++i) std::swap(order[i], order[i + rng.index(total - i)]);
  order.resize(take);
  std::sort(order.begin(), order.end());

  std::vector<sparse::Patch> patches;
  patches.reserve(take);
  for (std::size_t id : order) {
    const auto& img = images[id / per_image];
    const std::size_t local = id % per_image;
    const std::size_t oy = (local / per_axis) * stride;
    const std::size_t ox = (local % per_axis) * stride;
    sparse::Patch p(patch_side * patch_side);
    for (std::size_t y = 0; y < patch_side; ++y)
      for (std::size_t x = 0; x < patch_side; ++x) p[y * patch_side + x] = img.at(oy + y, ox + x);
    patches.push_back(std::move(p));
  }
  return patches;
}

}  // namespace

void cmd_image(const RunConfig& cfg, const fs::path& out) {
  cfg.validate();
  Stopwatch clock;
  Manifest manifest = Manifest::load(out);
  manifest.require_stage("simulate", "image");
  manifest.bind_config(cfg, false);
  manifest.drop_stages_after("simulate");

  const rp::EmbeddingParams emb{cfg.embedding_m, cfg.resolved_tau()};
  const auto all_cells = cells(cfg);

  // Healthy training windows fix the clip threshold and train the dictionary.
  std::map<std::string, std::vector<std::vector<double>>> healthy_train;
  for (const Cell& c : all_cells)
    if (c.split == "train" && c.fault_ratio == 0.0) healthy_train[c.name()] = load_windows(cfg, out, c);

  double clip = 0.0;
  if (cfg.clip_threshold) {
    clip = *cfg.clip_threshold;
  } else {
    std::vector<rp::Trajectory> trajs;
    for (const auto& [name, windows] : healthy_train)
      for (const auto& w : windows) trajs.push_back(rp::delay_embed(w, emb));
    clip = rp::median_pairwise_distance(trajs, cfg.median_max_points);
    if (!(clip > 0)) throw InputError("healthy training windows are constant; clip threshold would be zero");
  }

  std::map<std::string, std::vector<rp::UnitImage>> healthy_images;
  for (const auto& [name, windows] : healthy_train) healthy_images[name] = base_images(windows, emb, clip, cfg.image_side);

  fs::create_directories(out / "images");
  fs::create_directories(out / "model");
  std::vector<fs::path> files;
  sparse::Dictionary dict;
  json dict_info = nullptr;
  if (cfg.emphasis_enabled) {
    std::vector<rp::UnitImage> pool;
    for (const auto& [name, imgs] : healthy_images) pool.insert(pool.end(), imgs.begin(), imgs.end());
    const auto patches = sample_patches(pool, cfg.patch_side, cfg.patch_stride, cfg.dictionary_patches,
                                        derive_seed(cfg.seed, "dictionary/patches"));
    sparse::LearnOptions opts;
    opts.atoms = cfg.dictionary_atoms;
    opts.lambda = cfg.sparsity_lambda;
    opts.epochs = cfg.dictionary_epochs;
    opts.ista_iters = cfg.ista_iters;
    opts.seed = derive_seed(cfg.seed, "dictionary");
    auto learned = sparse::learn_dictionary(patches, cfg.patch_side, opts);
    dict = std::move(learned.dictionary);
    sparse::save_dictionary(dict, out / "model" / "dictionary.bin");
    files.emplace_back("model/dictionary.bin");
    dict_info = {{"patches", patches.size()}, {"objective", learned.objective}, {"reseeds", learned.reseeds.size()}};
  }

  json index = {{"clip_threshold", clip},
                {"tau", emb.tau},
                {"m", emb.m},
                {"image_side", cfg.image_side},
                {"emphasized", cfg.emphasis_enabled},
                {"cells", json::array()}};
  std::size_t embedded = 0;
  for (const Cell& c : all_cells) {
    std::vector<rp::UnitImage> images;
    std::size_t length = 0;
    if (auto it = healthy_images.find(c.name()); it != healthy_images.end()) {
      images = std::move(it->second);
      length = healthy_train.at(c.name()).front().size();
    } else {
      const auto windows = load_windows(cfg, out, c);
      length = windows.front().size();
      images = base_images(windows, emb, clip, cfg.image_side);
    }
    embedded = rp::embedded_length(length, emb);
    if (cfg.emphasis_enabled) {
      const auto n = static_cast<std::ptrdiff_t>(images.size());
#pragma omp parallel for schedule(dynamic, 1)
      for (std::ptrdiff_t k = 0; k < n; ++k) {
        auto& img = images[static_cast<std::size_t>(k)];
        img = sparse::emphasize(img, dict, cfg.sparsity_lambda, cfg.ista_iters, cfg.patch_stride);
      }
    }
    const fs::path dir = fs::path("images") / c.name();
    fs::create_directories(out / dir);
    for (std::size_t k = 0; k < images.size(); ++k) {
      const fs::path rel = dir / window_file(k);
      rp::write_pgm16(images[k], out / rel);
      files.push_back(rel);
      if (cfg.export_png) {
        fs::path png = rel;
        png.replace_extension(".png");
        rp::write_png16(images[k], out / png);
        files.push_back(png);
      }
    }
    index["cells"].push_back({{"name", c.name()},
                              {"label", c.label},
                              {"grid_index", c.grid_index},
                              {"fault_ratio", c.fault_ratio},
                              {"split", c.split},
                              {"windows", images.size()},
                              {"hop", cfg.hop},
                              {"dir", dir.generic_string()}});
  }
  write_text(out / "images" / "index.json", index.dump(2) + "\n");
  files.emplace_back("images/index.json");

  manifest.derived()["clip_threshold"] = clip;
  manifest.derived()["tau"] = emb.tau;
  manifest.derived()["embedded_length"] = embedded;
  if (!dict_info.is_null()) manifest.derived()["dictionary"] = dict_info;
  manifest.record_stage("image", out, files, clock.seconds());
  manifest.save(out);
}

// ---------------------------------------------------------------- train

namespace {

std::vector<rp::UnitImage> load_cell_images(const fs::path& out, const json& cell) {
  std::vector<rp::UnitImage> images;
  const std::size_t n = cell.at("windows").get<std::size_t>();
  const fs::path dir = out / cell.at("dir").get<std::string>();
  images.reserve(n);
  for (std::size_t k = 0; k < n; ++k) images.push_back(rp::read_pgm16(dir / window_file(k)));
  return images;
}

}  // namespace

void cmd_train(const RunConfig& cfg, const fs::path& out) {
  cfg.validate();
  Stopwatch clock;
  Manifest manifest = Manifest::load(out);
  manifest.require_stage("image", "train");
  manifest.bind_config(cfg, false);
  manifest.drop_stages_after("image");

  const json index = read_json(out / "images" / "index.json");
  cnn::Dataset data;
  for (const auto& cell : index.at("cells")) {
    if (cell.at("split") != "train") continue;
    const int label = cfg.label_of(cell.at("grid_index").get<std::size_t>());
    for (auto& img : load_cell_images(out, cell)) {
      data.images.push_back(std::move(img));
      data.labels.push_back(label);
    }
  }
  if (data.images.empty()) throw InputError("no training images");

  const auto spec = cfg.resolved_network();
  auto net = cnn::init_network(spec, derive_seed(cfg.seed, "cnn"));
  cnn::TrainOptions opts;
  opts.learning_rate = cfg.learning_rate;
  opts.epochs = cfg.train_epochs;
  opts.batch_size = cfg.batch_size;
  opts.seed = derive_seed(cfg.seed, "cnn/train");
  const auto result = cnn::train(std::move(net), data, opts);

  fs::create_directories(out / "model");
  cnn::save_network(result.network, out / "model" / "network.bin");
  std::ostringstream trace;
  trace << "epoch,loss,accuracy\n";
  trace.precision(17);
  for (std::size_t e = 0; e < result.trace.size(); ++e)
    trace << e << ',' << result.trace[e].loss << ',' << result.trace[e].accuracy << '\n';
  write_text(out / "model" / "train_trace.csv", trace.str());

  manifest.derived()["activation_dim"] = spec.derive().flat;
  manifest.derived()["training_images"] = data.images.size();
  manifest.record_stage("train", out, {"model/network.bin", "model/train_trace.csv"}, clock.seconds());
  manifest.save(out);
}

// ---------------------------------------------------------------- score

void cmd_score(const RunConfig& cfg, const fs::path& out) {
  cfg.validate();
  Stopwatch clock;
  Manifest manifest = Manifest::load(out);
  manifest.require_stage("train", "score");
  manifest.bind_config(cfg, false);
  manifest.drop_stages_after("train");

  const auto net = cnn::load_network(out / "model" / "network.bin");
  const json index = read_json(out / "images" / "index.json");

  auto activations_of = [&](const json& cell) {
    const auto images = load_cell_images(out, cell);
    std::vector<std::vector<double>> acts(images.size());
    const auto n = static_cast<std::ptrdiff_t>(images.size());
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t k = 0; k < n; ++k)
      acts[static_cast<std::size_t>(k)] = cnn::extract_activation(net, images[static_cast<std::size_t>(k)]);
    return acts;
  };

  // The baseline uses every healthy training window; the alarm threshold
  // comes from their leave-one-out scores so it reflects unseen windows.
  std::vector<std::vector<double>> healthy;
  for (const auto& cell : index.at("cells")) {
    if (cell.at("split") != "train" || cell.at("fault_ratio").get<double>() != 0.0) continue;
    for (auto& a : activations_of(cell)) healthy.push_back(std::move(a));
  }
  const auto model = health::fit_baseline(healthy, cfg.ridge_epsilon);
  fs::create_directories(out / "model");
  health::save_baseline(model, out / "model" / "baseline.bin");
  const auto calib = health::leave_one_out_scores(healthy, model.ridge_epsilon);
  const double threshold = health::set_threshold(calib, cfg.threshold_quantile, cfg.threshold_margin);

  fs::create_directories(out / "scores");
  std::vector<fs::path> files = {"model/baseline.bin"};
  json listing = json::array();
  std::vector<features::FeatureVector> feature_rows;
  std::vector<std::pair<std::string, std::size_t>> feature_keys;
  std::ostringstream indicators;
  indicators.precision(17);
  indicators << "window_index,label,third_harmonic_ratio,clarke_eccentricity\n";
  const double fe = cfg.motor.electrical_frequency();

  for (const auto& cell : index.at("cells")) {
    if (cell.at("split") != "test") continue;
    const std::string name = cell.at("name").get<std::string>();
    const std::string label = cell.at("label").get<std::string>();
    auto series = health::score_series(activations_of(cell), model);
    series.threshold = threshold;
    const fs::path rel = fs::path("scores") / (name + ".csv");
    health::write_series_csv(series, out / rel);
    files.push_back(rel);
    listing.push_back({{"label", label}, {"fault_ratio", cell.at("fault_ratio")}, {"file", rel.generic_string()}});

    sim::ThreePhaseSignal sig;
    const Cell c{cell.at("grid_index").get<std::size_t>(), label, cell.at("fault_ratio").get<double>(), "test"};
    const auto windows = load_windows(cfg, out, c, &sig);
    const auto starts = sim::window_starts(sig.size(), cfg.window_len, cfg.hop);
    for (std::size_t k = 0; k < windows.size(); ++k) {
      feature_rows.push_back(features::time_features(windows[k], cfg.entropy_bins));
      feature_keys.emplace_back(label, k);
      sim::ThreePhaseSignal slice;
      slice.sample_rate = sig.sample_rate;
      for (int p = 0; p < 3; ++p)
        slice.phases[p].assign(sig.phases[p].begin() + static_cast<std::ptrdiff_t>(starts[k]),
                               sig.phases[p].begin() + static_cast<std::ptrdiff_t>(starts[k] + cfg.window_len));
      const auto locus = features::clarke_transform(slice, fe);
      indicators << k << ',' << label << ',' << features::third_harmonic_ratio(windows[k], sig.sample_rate, fe) << ','
                 << (locus.eccentricity ? *locus.eccentricity : NAN) << '\n';
    }
  }

  const auto normalized = features::normalize_features(feature_rows);
  std::ostringstream table;
  table.precision(17);
  table << "window_index,label";
  for (auto n : features::FeatureVector::kNames) table << ',' << n;
  table << '\n';
  for (std::size_t r = 0; r < normalized.rows.size(); ++r) {
    table << feature_keys[r].second << ',' << feature_keys[r].first;
    for (double v : normalized.rows[r]) table << ',' << v;
    table << '\n';
  }
  write_text(out / "scores" / "features.csv", table.str());
  write_text(out / "scores" / "indicators.csv", indicators.str());
  const json summary = {{"threshold", threshold},
                        {"threshold_quantile", cfg.threshold_quantile},
                        {"threshold_margin", cfg.threshold_margin},
                        {"ridge_epsilon", model.ridge_epsilon},
                        {"fit_count", model.fit_count},
                        {"calibration", "leave_one_out"},
                        {"series", listing}};
  write_text(out / "scores" / "scores.json", summary.dump(2) + "\n");
  files.insert(files.end(), {"scores/features.csv", "scores/indicators.csv", "scores/scores.json"});

  manifest.derived()["threshold"] = threshold;
  manifest.derived()["ridge_epsilon"] = model.ridge_epsilon;
  manifest.record_stage("score", out, files, clock.seconds());
  manifest.save(out);
}

void run_all(const RunConfig& cfg, const fs::path& out) {
  cmd_simulate(cfg, out);
  cmd_image(cfg, out);
  cmd_train(cfg, out);
  cmd_score(cfg, out);
  cmd_report(cfg, out);
}

}  // namespace itsc::pipeline
