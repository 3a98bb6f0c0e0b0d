#include "itsc/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "itsc/error.hpp"
#include "itsc/imaging.hpp"
#include "json.hpp"

namespace itsc::pipeline {

using nlohmann::json;

namespace {

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw ConfigError(field + ": " + what);
}

bool safe_label(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) return false;
  return true;
}

json layer_json(const cnn::ConvLayerSpec& l) {
  return {{"kernel", l.kernel}, {"channels", l.channels}, {"stride", l.stride}, {"pool", l.pool}};
}

void read_layer(const json& j, cnn::ConvLayerSpec& l) {
  l.kernel = j.value("kernel", l.kernel);
  l.channels = j.value("channels", l.channels);
  l.stride = j.value("stride", l.stride);
  l.pool = j.value("pool", l.pool);
}

json to_json(const RunConfig& c) {
  json grid = json::array();
  for (const auto& s : c.fault_grid) grid.push_back({{"label", s.label}, {"fault_ratio", s.fault_ratio}});
  json j;
  j["seed"] = c.seed;
  j["motor"] = {{"rated_speed_rpm", c.motor.rated_speed_rpm},
                {"pole_pairs", c.motor.pole_pairs},
                {"rated_amplitude", c.motor.rated_amplitude},
                {"sample_rate", c.motor.sample_rate},
                {"coupling",
                 {{"alpha", c.motor.coupling.alpha}, {"beta", c.motor.coupling.beta}, {"gamma", c.motor.coupling.gamma}}}};
  j["fault"] = {{"faulted_phase", std::string(sim::phase_name(c.faulted_phase))}, {"grid", grid}};
  // JSON has no infinity; a null SNR means noiseless.
  j["noise"] = {{"snr_db", std::isfinite(c.noise.snr_db) ? json(c.noise.snr_db) : json(nullptr)},
                {"spike_rate", c.noise.spike_rate},
                {"spike_amplitude", c.noise.spike_amplitude}};
  j["duration_s"] = {{"train", c.train_duration_s}, {"test", c.test_duration_s}};
  j["windowing"] = {{"window_len", c.window_len}, {"hop", c.hop}, {"phase", std::string(sim::phase_name(c.imaged_phase))}};
  j["embedding"] = {{"m", c.embedding_m}, {"tau", c.embedding_tau ? json(*c.embedding_tau) : json("auto")}};
  j["imaging"] = {{"clip_threshold", c.clip_threshold ? json(*c.clip_threshold) : json("median")},
                  {"median_max_points", c.median_max_points},
                  {"image_side", c.image_side},
                  {"export_png", c.export_png}};
  j["emphasis"] = {{"enabled", c.emphasis_enabled},     {"patch_side", c.patch_side},
                   {"stride", c.patch_stride},          {"atoms", c.dictionary_atoms},
                   {"lambda", c.sparsity_lambda},       {"epochs", c.dictionary_epochs},
                   {"ista_iters", c.ista_iters},        {"training_patches", c.dictionary_patches}};
  j["network"] = {{"input_side", c.network.input_side},
                  {"conv1", layer_json(c.network.conv1)},
                  {"conv2", layer_json(c.network.conv2)},
                  {"fc1_width", c.network.fc1_width},
                  {"labels", c.severity_classes ? "severity" : "binary"}};
  j["training"] = {{"learning_rate", c.learning_rate}, {"epochs", c.train_epochs}, {"batch_size", c.batch_size}};
  j["health"] = {{"ridge_epsilon", c.ridge_epsilon ? json(*c.ridge_epsilon) : json("relative")},
                 {"threshold_quantile", c.threshold_quantile},
                 {"threshold_margin", c.threshold_margin}};
  j["features"] = {{"entropy_bins", c.entropy_bins}};
  return j;
}

template <typename T>
void get(const json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

RunConfig from_json(const json& j) {
  RunConfig c;
  get(j, "seed", c.seed);
  if (j.contains("motor")) {
    const auto& m = j.at("motor");
    get(m, "rated_speed_rpm", c.motor.rated_speed_rpm);
    get(m, "pole_pairs", c.motor.pole_pairs);
    get(m, "rated_amplitude", c.motor.rated_amplitude);
    get(m, "sample_rate", c.motor.sample_rate);
    if (m.contains("coupling")) {
      const auto& k = m.at("coupling");
      get(k, "alpha", c.motor.coupling.alpha);
      get(k, "beta", c.motor.coupling.beta);
      get(k, "gamma", c.motor.coupling.gamma);
    }
  }
  if (j.contains("fault")) {
    const auto& f = j.at("fault");
    if (f.contains("faulted_phase")) c.faulted_phase = sim::parse_phase(f.at("faulted_phase").get<std::string>());
    if (f.contains("grid")) {
      c.fault_grid.clear();
      for (const auto& g : f.at("grid")) c.fault_grid.push_back({g.at("label").get<std::string>(), g.at("fault_ratio").get<double>()});
    }
  }
  if (j.contains("noise")) {
    const auto& n = j.at("noise");
    if (n.contains("snr_db"))
      c.noise.snr_db = n.at("snr_db").is_null() ? INFINITY : n.at("snr_db").get<double>();
    get(n, "spike_rate", c.noise.spike_rate);
    get(n, "spike_amplitude", c.noise.spike_amplitude);
  }
  if (j.contains("duration_s")) {
    get(j.at("duration_s"), "train", c.train_duration_s);
    get(j.at("duration_s"), "test", c.test_duration_s);
  }
  if (j.contains("windowing")) {
    const auto& w = j.at("windowing");
    get(w, "window_len", c.window_len);
    get(w, "hop", c.hop);
    if (w.contains("phase")) c.imaged_phase = sim::parse_phase(w.at("phase").get<std::string>());
  }
  if (j.contains("embedding")) {
    const auto& e = j.at("embedding");
    get(e, "m", c.embedding_m);
    if (e.contains("tau")) {
      if (e.at("tau").is_string()) {
        require(e.at("tau") == "auto", "embedding.tau", "expected an integer or \"auto\"");
        c.embedding_tau.reset();
      } else {
        c.embedding_tau = e.at("tau").get<std::size_t>();
      }
    }
  }
  if (j.contains("imaging")) {
    const auto& im = j.at("imaging");
    if (im.contains("clip_threshold")) {
      if (im.at("clip_threshold").is_string()) {
        require(im.at("clip_threshold") == "median", "imaging.clip_threshold", "expected a number or \"median\"");
        c.clip_threshold.reset();
      } else {
        c.clip_threshold = im.at("clip_threshold").get<double>();
      }
    }
    get(im, "median_max_points", c.median_max_points);
    get(im, "image_side", c.image_side);
    get(im, "export_png", c.export_png);
  }
  if (j.contains("emphasis")) {
    const auto& e = j.at("emphasis");
    get(e, "enabled", c.emphasis_enabled);
    get(e, "patch_side", c.patch_side);
    get(e, "stride", c.patch_stride);
    get(e, "atoms", c.dictionary_atoms);
    get(e, "lambda", c.sparsity_lambda);
    get(e, "epochs", c.dictionary_epochs);
    get(e, "ista_iters", c.ista_iters);
    get(e, "training_patches", c.dictionary_patches);
  }
  if (j.contains("network")) {
    const auto& n = j.at("network");
    get(n, "input_side", c.network.input_side);
    if (n.contains("conv1")) read_layer(n.at("conv1"), c.network.conv1);
    if (n.contains("conv2")) read_layer(n.at("conv2"), c.network.conv2);
    get(n, "fc1_width", c.network.fc1_width);
    if (n.contains("labels")) {
      const auto mode = n.at("labels").get<std::string>();
      require(mode == "binary" || mode == "severity", "network.labels", "expected \"binary\" or \"severity\"");
      c.severity_classes = mode == "severity";
    }
  }
  if (j.contains("training")) {
    const auto& t = j.at("training");
    get(t, "learning_rate", c.learning_rate);
    get(t, "epochs", c.train_epochs);
    get(t, "batch_size", c.batch_size);
  }
  if (j.contains("health")) {
    const auto& h = j.at("health");
    if (h.contains("ridge_epsilon")) {
      if (h.at("ridge_epsilon").is_string()) {
        require(h.at("ridge_epsilon") == "relative", "health.ridge_epsilon", "expected a number or \"relative\"");
        c.ridge_epsilon.reset();
      } else {
        c.ridge_epsilon = h.at("ridge_epsilon").get<double>();
      }
    }
    get(h, "threshold_quantile", c.threshold_quantile);
    get(h, "threshold_margin", c.threshold_margin);
  }
  if (j.contains("features")) get(j.at("features"), "entropy_bins", c.entropy_bins);
  return c;
}

}  // namespace

std::size_t RunConfig::resolved_tau() const {
  if (embedding_tau) return *embedding_tau;
  const double quarter = motor.sample_rate / (4.0 * motor.electrical_frequency());
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(quarter)));
}

std::size_t RunConfig::class_count() const {
  return severity_classes ? std::max<std::size_t>(2, fault_grid.size()) : 2;
}

int RunConfig::label_of(std::size_t grid_index) const {
  if (severity_classes) return static_cast<int>(grid_index);
  return fault_grid.at(grid_index).fault_ratio == 0.0 ? 0 : 1;
}

cnn::NetworkSpec RunConfig::resolved_network() const {
  cnn::NetworkSpec spec = network;
  spec.class_count = class_count();
  return spec;
}

void RunConfig::validate() const {
  motor.validate();
  noise.validate();
  require(!fault_grid.empty(), "fault.grid", "must list at least one severity");
  std::set<std::string> labels;
  bool has_healthy = false;
  for (const auto& s : fault_grid) {
    require(safe_label(s.label), "fault.grid.label", "'" + s.label + "' must be non-empty [A-Za-z0-9_.-]");
    require(labels.insert(s.label).second, "fault.grid.label", "duplicate label '" + s.label + "'");
    sim::FaultSpec{s.fault_ratio, faulted_phase}.validate();
    has_healthy = has_healthy || s.fault_ratio == 0.0;
  }
  require(has_healthy, "fault.grid", "must include a healthy (fault_ratio 0) level for the baseline");
  require(std::isfinite(train_duration_s) && train_duration_s > 0, "duration_s.train", "must be > 0");
  require(std::isfinite(test_duration_s) && test_duration_s > 0, "duration_s.test", "must be > 0");
  require(window_len >= 1 && hop >= 1, "windowing", "window_len and hop must be >= 1");
  const double shortest = std::min(train_duration_s, test_duration_s) * motor.sample_rate;
  require(static_cast<double>(window_len) <= std::floor(shortest), "windowing.window_len",
          "exceeds the samples available in a split");
  require(static_cast<double>(window_len) >= 3.0 * motor.sample_rate / motor.electrical_frequency(),
          "windowing.window_len", "must span at least 3 electrical periods for the harmonic indicator");
  require(embedding_m >= 1, "embedding.m", "must be >= 1");
  require(resolved_tau() >= 1, "embedding.tau", "must be >= 1");
  const std::size_t span = (embedding_m - 1) * resolved_tau();
  require(window_len >= span + 2, "embedding", "window too short for m and tau");
  require(image_side >= 2 && image_side <= window_len - span, "imaging.image_side",
          "must lie in [2, embedded length]");
  require(!clip_threshold || (std::isfinite(*clip_threshold) && *clip_threshold > 0), "imaging.clip_threshold",
          "must be > 0");
  require(median_max_points >= 2, "imaging.median_max_points", "must be >= 2");
  if (emphasis_enabled) {
    require(patch_side >= 1 && patch_side <= image_side, "emphasis.patch_side", "must lie in [1, image_side]");
    require(patch_stride >= 1, "emphasis.stride", "must be >= 1");
    require(dictionary_atoms >= 1, "emphasis.atoms", "must be >= 1");
    require(sparsity_lambda > 0, "emphasis.lambda", "must be > 0");
    require(dictionary_epochs >= 1, "emphasis.epochs", "must be >= 1");
    require(ista_iters >= 1, "emphasis.ista_iters", "must be >= 1");
    require(dictionary_patches >= 1, "emphasis.training_patches", "must be >= 1");
  }
  require(network.input_side == image_side, "network.input_side", "must equal imaging.image_side");
  try {
    resolved_network().derive();
  } catch (const SpecError& e) {
    throw ConfigError(std::string("network: ") + e.what());
  }
  require(std::isfinite(learning_rate) && learning_rate >= 0, "training.learning_rate", "must be >= 0");
  require(batch_size >= 1, "training.batch_size", "must be >= 1");
  require(!ridge_epsilon || *ridge_epsilon >= 0, "health.ridge_epsilon", "must be >= 0");
  require(threshold_quantile > 0 && threshold_quantile <= 1, "health.threshold_quantile", "must lie in (0, 1]");
  require(threshold_margin >= 1, "health.threshold_margin", "must be >= 1");
  require(entropy_bins >= 1, "features.entropy_bins", "must be >= 1");
}

RunConfig parse_config(const std::string& json_text) {
  try {
    RunConfig c = from_json(json::parse(json_text));
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string dump_config(const RunConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

}  // namespace itsc::pipeline
