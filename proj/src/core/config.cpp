// SPDX-License-Identifier: Apache-2.0

#include "paco/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace paco {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw ConfigError("config: " + key + " expects an integer, got '" + v + "'");
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw ConfigError("config: " + key + " expects an integer, got '" + v + "'");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config: " + key + " expects a number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ConfigError("config: " + key + " expects true/false, got '" + v + "'");
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  if (trim(v).empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_size(key, trim(item)));
  return out;
}

std::string fmt_double(double d) {
  std::ostringstream os;
  os << std::setprecision(17) << d;
  return os.str();
}

std::string fmt_list(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

struct Field {
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define PACO_SIZE(name) \
  Field{#name, [](RunConfig& c, const std::string& v) { c.name = parse_size(#name, v); }, \
        [](const RunConfig& c) { return std::to_string(c.name); }}
#define PACO_U64(name) \
  Field{#name, [](RunConfig& c, const std::string& v) { c.name = parse_u64(#name, v); }, \
        [](const RunConfig& c) { return std::to_string(c.name); }}
#define PACO_REAL(name) \
  Field{#name, [](RunConfig& c, const std::string& v) { c.name = parse_double(#name, v); }, \
        [](const RunConfig& c) { return fmt_double(c.name); }}
#define PACO_BOOL(name) \
  Field{#name, [](RunConfig& c, const std::string& v) { c.name = parse_bool(#name, v); }, \
        [](const RunConfig& c) { return std::string(c.name ? "true" : "false"); }}
#define PACO_LIST(name) \
  Field{#name, [](RunConfig& c, const std::string& v) { c.name = parse_list(#name, v); }, \
        [](const RunConfig& c) { return fmt_list(c.name); }}

const std::vector<Field>& fields() {
  static const std::vector<Field> f{
      PACO_SIZE(image_size),
      PACO_SIZE(channels),
      PACO_SIZE(patch_size),
      PACO_SIZE(n_tokens),
      PACO_SIZE(embed_dim),
      PACO_SIZE(encoder_depth),
      PACO_SIZE(encoder_heads),
      PACO_SIZE(mlp_ratio),
      PACO_SIZE(decoder_depth),
      PACO_LIST(feature_tap_layers),
      PACO_SIZE(predictor_hidden),
      PACO_LIST(perceptual_channels),
      PACO_LIST(perceptual_layer_indices),
      PACO_U64(perceptual_seed),
      PACO_REAL(mask_ratio),
      PACO_REAL(incubation_random_fraction),
      PACO_BOOL(incubation_ce_only),
      PACO_REAL(loss_weight_perceptual),
      PACO_BOOL(ce_mean),
      PACO_BOOL(mse_patch_norm),
      PACO_REAL(lr),
      PACO_REAL(predictor_lr),
      PACO_REAL(min_lr),
      PACO_REAL(weight_decay),
      PACO_REAL(beta1),
      PACO_REAL(beta2),
      PACO_SIZE(warmup_epochs),
      PACO_SIZE(epochs),
      PACO_SIZE(batch_size),
      PACO_U64(seed),
  };
  return f;
}

#undef PACO_SIZE
#undef PACO_U64
#undef PACO_REAL
#undef PACO_BOOL
#undef PACO_LIST

}  // namespace

std::vector<std::size_t> default_tap_layers(std::size_t depth) {
  std::vector<std::size_t> out;
  for (std::size_t ref_layer : {2, 4, 8, 12}) {
    const std::size_t l = (ref_layer * depth + 11) / 12;
    const std::size_t clamped = std::max<std::size_t>(1, l);
    if (out.empty() || out.back() != clamped) out.push_back(clamped);
  }
  return out;
}

std::vector<std::size_t> RunConfig::tap_layers() const {
  return feature_tap_layers.empty() ? default_tap_layers(encoder_depth) : feature_tap_layers;
}

void RunConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("invalid config: " + m); };
  if (image_size == 0 || patch_size == 0 || n_tokens == 0 || embed_dim == 0 ||
      encoder_depth == 0 || encoder_heads == 0 || mlp_ratio == 0 || batch_size == 0)
    fail("all dimensions must be positive");
  if (channels != 1 && channels != 3) fail("channels must be 1 or 3");
  if (image_size % patch_size != 0) fail("image_size must be divisible by patch_size");
  if (embed_dim % encoder_heads != 0) fail("embed_dim must be divisible by encoder_heads");
  if (!(mask_ratio > 0.0 && mask_ratio < 1.0)) fail("mask_ratio must lie in (0, 1)");
  if (!(incubation_random_fraction >= 0.0 && incubation_random_fraction <= 1.0))
    fail("incubation_random_fraction must lie in [0, 1]");
  const auto taps = tap_layers();
  for (std::size_t i = 0; i < taps.size(); ++i) {
    if (taps[i] < 1 || taps[i] > encoder_depth) fail("feature_tap_layers must lie in [1, encoder_depth]");
    if (i > 0 && taps[i] <= taps[i - 1]) fail("feature_tap_layers must be strictly ascending");
  }
  if (perceptual_channels.empty()) fail("perceptual_channels must not be empty");
  for (std::size_t l : perceptual_layer_indices)
    if (l < 1 || l > perceptual_channels.size())
      fail("perceptual_layer_indices must lie in [1, len(perceptual_channels)]");
  if (!(lr >= 0.0) || !(predictor_lr >= 0.0)) fail("learning rates must be non-negative");
  if (!std::isfinite(loss_weight_perceptual)) fail("loss_weight_perceptual must be finite");
}

void RunConfig::set(const std::string& key, const std::string& value) {
  for (const Field& f : fields())
    if (key == f.key) {
      f.set(*this, trim(value));
      return;
    }
  throw ConfigError("config: unknown key '" + key + "'");
}

std::string RunConfig::to_text() const {
  std::string out = "# paco run config v1\n";
  for (const Field& f : fields()) out += std::string(f.key) + " = " + f.get(*this) + "\n";
  return out;
}

RunConfig RunConfig::from_text(const std::string& text) {
  RunConfig c;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    c.set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return from_text(ss.str());
}

void RunConfig::save(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write config file " + path);
  f << to_text();
}

RunConfig RunConfig::preset(const std::string& name) {
  RunConfig c;
  if (name == "desk" || name.empty()) return c;
  if (name == "tiny") {
    c.image_size = 32;
    c.patch_size = 4;
    c.embed_dim = 32;
    c.encoder_depth = 4;
    c.encoder_heads = 4;
    c.perceptual_channels = {8, 16};
    c.lr = 1e-3;
    c.predictor_lr = 3e-3;
    c.batch_size = 8;
    return c;
  }
  if (name == "micro") {
    c.image_size = 8;
    c.patch_size = 4;
    c.embed_dim = 8;
    c.encoder_depth = 1;
    c.encoder_heads = 2;
    c.mlp_ratio = 2;
    c.predictor_hidden = 8;
    c.perceptual_channels = {4, 4};
    c.batch_size = 2;
    return c;
  }
  if (name == "vit-b16") {
    c.image_size = 224;
    c.patch_size = 16;
    c.embed_dim = 768;
    c.encoder_depth = 12;
    c.encoder_heads = 12;
    c.perceptual_channels = {64, 128, 256};
    c.perceptual_layer_indices = {1, 2, 3};
    c.batch_size = 720;
    c.epochs = 32;
    return c;
  }
  throw ConfigError("unknown preset '" + name + "'");
}

}  // namespace paco
