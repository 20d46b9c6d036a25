#include "mva/config.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <vector>

#include "mva/init.hpp"

namespace mva {

namespace {

enum class ValueType { Int, Double, U64, Bool, AdapterKindName, TauShapeName, BlockList };

struct KeySpec {
  const char* key;
  ValueType type;
  const char* def;
  const char* doc;
};

const KeySpec kKeys[] = {
    {"encoder.d_v", ValueType::Int, "48", "vision encoder width"},
    {"encoder.d_t", ValueType::Int, "32", "text encoder width"},
    {"encoder.embed_dim", ValueType::Int, "32", "joint retrieval embedding width"},
    {"encoder.layers", ValueType::Int, "2", "transformer blocks per encoder"},
    {"encoder.heads", ValueType::Int, "2", "attention heads per block"},
    {"encoder.patches", ValueType::Int, "16", "patch tokens per frame"},
    {"encoder.patch_dim", ValueType::Int, "12", "raw patch vector length"},
    {"encoder.vocab_size", ValueType::Int, "64", "text vocabulary size"},
    {"encoder.max_text_len", ValueType::Int, "8", "padded text length"},
    {"encoder.max_frames", ValueType::Int, "4", "maximum frames per video"},
    {"encoder.ffn_mult", ValueType::Int, "4", "backbone FFN expansion"},
    {"adapter.kind", ValueType::AdapterKindName, "mv", "mv | adaptmlp_par | adaptmlp_seq | none"},
    {"adapter.bottleneck", ValueType::Int, "8", "adapter width d' after downsample"},
    {"adapter.scale", ValueType::Double, "0.1", "branch output scalar s"},
    {"adapter.shrinkage", ValueType::Int, "4", "calibration hidden width divisor"},
    {"adapter.trm_heads", ValueType::Int, "2", "heads in the branch transformer"},
    {"adapter.trm_ffn_mult", ValueType::Int, "2", "FFN expansion in the branch transformer"},
    {"adapter.blocks", ValueType::BlockList, "all", "equipped blocks: all | last | none | i,j,..."},
    {"cmi.enabled", ValueType::Bool, "true", "share downsample weights across modalities"},
    {"cmi.layers", ValueType::BlockList, "last", "blocks using the shared space: all | last | none | i,j,..."},
    {"cmi.rows", ValueType::Int, "4", "shared matrix rows m"},
    {"cmi.cols", ValueType::Int, "2", "shared matrix cols n"},
    {"tau.init", ValueType::Double, "2", "initial temperature"},
    {"tau.cap", ValueType::TauShapeName, "linear", "temperature cap schedule: linear | constant"},
    {"tau.cap_start", ValueType::Double, "100", "cap at the first step"},
    {"tau.cap_end", ValueType::Double, "20", "cap floor at the last step"},
    {"train.epochs", ValueType::Int, "30", "training epochs"},
    {"train.batch", ValueType::Int, "32", "contrastive batch size"},
    {"train.max_steps", ValueType::Int, "0", "stop after this many steps (0 = no limit)"},
    {"train.lr", ValueType::Double, "0.001", "learning rate"},
    {"train.beta1", ValueType::Double, "0.9", "first moment coefficient"},
    {"train.beta2", ValueType::Double, "0.999", "second moment coefficient"},
    {"train.eps", ValueType::Double, "1e-8", "optimizer epsilon"},
    {"train.seed", ValueType::U64, "0", "seed for model init and batching"},
    {"data.n_pairs", ValueType::Int, "256", "video-text pairs (two per clip)"},
    {"data.appearance_classes", ValueType::Int, "4", "appearance prototypes"},
    {"data.order_classes", ValueType::Int, "2", "playback orders (fixed at 2)"},
    {"data.frames", ValueType::Int, "4", "frames per video"},
    {"data.patches", ValueType::Int, "16", "patch tokens per frame"},
    {"data.patch_dim", ValueType::Int, "12", "raw patch vector length"},
    {"data.noise_std", ValueType::Double, "0.1", "per-entry Gaussian noise"},
    {"data.template_len", ValueType::Int, "8", "stored token count per text"},
    {"data.seed", ValueType::U64, "0", "seed for dataset generation and split"},
};

const KeySpec* find_key(const std::string& key) {
  for (const KeySpec& k : kKeys) {
    if (key == k.key) return &k;
  }
  return nullptr;
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

long long parse_int(const std::string& key, const std::string& value) {
  char* end = nullptr;
  const long long v = std::strtoll(value.c_str(), &end, 10);
  if (value.empty() || end != value.c_str() + value.size()) {
    throw ConfigError(key, "expected an integer, got '" + value + "'");
  }
  return v;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  char* end = nullptr;
  const unsigned long long v = std::strtoull(value.c_str(), &end, 10);
  if (value.empty() || end != value.c_str() + value.size() || value[0] == '-') {
    throw ConfigError(key, "expected an unsigned integer, got '" + value + "'");
  }
  return static_cast<std::uint64_t>(v);
}

double parse_double(const std::string& key, const std::string& value) {
  char* end = nullptr;
  const double v = std::strtod(value.c_str(), &end);
  if (value.empty() || end != value.c_str() + value.size()) {
    throw ConfigError(key, "expected a number, got '" + value + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true") return true;
  if (value == "false") return false;
  throw ConfigError(key, "expected true or false, got '" + value + "'");
}

std::vector<int> parse_block_list(const std::string& key, const std::string& value, int layers) {
  std::vector<int> out;
  if (value == "none") return out;
  if (value == "all") {
    for (int i = 0; i < layers; ++i) out.push_back(i);
    return out;
  }
  if (value == "last") {
    out.push_back(layers - 1);
    return out;
  }
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ConfigError(key, "empty entry in block list '" + value + "'");
    out.push_back(static_cast<int>(parse_int(key, item)));
  }
  if (out.empty()) throw ConfigError(key, "empty block list '" + value + "'");
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

std::string format_block_list(const std::vector<int>& blocks) {
  if (blocks.empty()) return "none";
  std::string out;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(blocks[i]);
  }
  return out;
}

}  // namespace

RunConfig RunConfig::defaults() {
  RunConfig c;
  for (const KeySpec& k : kKeys) c.values_[k.key] = k.def;
  return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_text(ss.str());
}

RunConfig RunConfig::parse_text(const std::string& text) {
  RunConfig c = defaults();
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    const std::size_t hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(trim(line), "expected 'key = value'");
    c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return c;
}

RunConfig RunConfig::clip_b16() {
  RunConfig c = defaults();
  c.set("encoder.d_v", "768");
  c.set("encoder.d_t", "512");
  c.set("encoder.embed_dim", "512");
  c.set("encoder.layers", "12");
  c.set("encoder.heads", "8");
  c.set("encoder.patches", "196");
  c.set("encoder.patch_dim", "768");
  c.set("encoder.vocab_size", "49408");
  c.set("encoder.max_text_len", "77");
  c.set("encoder.max_frames", "12");
  c.set("adapter.bottleneck", "64");
  c.set("cmi.rows", "16");
  c.set("cmi.cols", "8");
  return c;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!find_key(key)) throw ConfigError(key, "unknown key");
  values_[key] = value;
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError(key, "unknown key");
  return it->second;
}

std::string RunConfig::canonical_text() const {
  const int layers = static_cast<int>(parse_int("encoder.layers", get("encoder.layers")));
  std::string out;
  for (const auto& [key, raw] : values_) {  // std::map: already sorted
    const KeySpec* spec = find_key(key);
    std::string norm;
    switch (spec->type) {
      case ValueType::Int: norm = std::to_string(parse_int(key, raw)); break;
      case ValueType::Double: norm = format_double(parse_double(key, raw)); break;
      case ValueType::U64: norm = std::to_string(parse_u64(key, raw)); break;
      case ValueType::Bool: norm = parse_bool(key, raw) ? "true" : "false"; break;
      case ValueType::AdapterKindName: norm = adapter_kind_name(parse_adapter_kind(raw)); break;
      case ValueType::TauShapeName: norm = tau_shape_name(parse_tau_shape(raw)); break;
      case ValueType::BlockList: norm = format_block_list(parse_block_list(key, raw, layers)); break;
    }
    out += key;
    out += " = ";
    out += norm;
    out += '\n';
  }
  return out;
}

std::uint64_t RunConfig::hash() const { return fnv1a64(canonical_text()); }

EncoderConfig RunConfig::encoder() const {
  EncoderConfig e;
  e.d_v = static_cast<int>(parse_int("encoder.d_v", get("encoder.d_v")));
  e.d_t = static_cast<int>(parse_int("encoder.d_t", get("encoder.d_t")));
  e.embed_dim = static_cast<int>(parse_int("encoder.embed_dim", get("encoder.embed_dim")));
  e.layers = static_cast<int>(parse_int("encoder.layers", get("encoder.layers")));
  e.heads = static_cast<int>(parse_int("encoder.heads", get("encoder.heads")));
  e.patches = static_cast<int>(parse_int("encoder.patches", get("encoder.patches")));
  e.patch_dim = static_cast<int>(parse_int("encoder.patch_dim", get("encoder.patch_dim")));
  e.vocab_size = static_cast<int>(parse_int("encoder.vocab_size", get("encoder.vocab_size")));
  e.max_text_len = static_cast<int>(parse_int("encoder.max_text_len", get("encoder.max_text_len")));
  e.max_frames = static_cast<int>(parse_int("encoder.max_frames", get("encoder.max_frames")));
  e.ffn_mult = static_cast<int>(parse_int("encoder.ffn_mult", get("encoder.ffn_mult")));
  return e;
}

AdapterConfig RunConfig::adapter() const {
  const int layers = static_cast<int>(parse_int("encoder.layers", get("encoder.layers")));
  AdapterConfig a;
  a.kind = parse_adapter_kind(get("adapter.kind"));
  a.bottleneck = static_cast<int>(parse_int("adapter.bottleneck", get("adapter.bottleneck")));
  a.scale = parse_double("adapter.scale", get("adapter.scale"));
  a.shrinkage = static_cast<int>(parse_int("adapter.shrinkage", get("adapter.shrinkage")));
  a.trm_heads = static_cast<int>(parse_int("adapter.trm_heads", get("adapter.trm_heads")));
  a.trm_ffn_mult = static_cast<int>(parse_int("adapter.trm_ffn_mult", get("adapter.trm_ffn_mult")));
  a.blocks = parse_block_list("adapter.blocks", get("adapter.blocks"), layers);
  a.cmi_enabled = parse_bool("cmi.enabled", get("cmi.enabled"));
  a.cmi_layers = parse_block_list("cmi.layers", get("cmi.layers"), layers);
  a.cmi_rows = static_cast<int>(parse_int("cmi.rows", get("cmi.rows")));
  a.cmi_cols = static_cast<int>(parse_int("cmi.cols", get("cmi.cols")));
  if (!a.cmi_enabled) a.cmi_layers.clear();
  if (a.kind == AdapterKind::None) {
    a.blocks.clear();
    a.cmi_layers.clear();
  }
  return a;
}

TrainSettings RunConfig::train() const {
  TrainSettings t;
  t.epochs = static_cast<int>(parse_int("train.epochs", get("train.epochs")));
  t.batch = static_cast<int>(parse_int("train.batch", get("train.batch")));
  t.max_steps = static_cast<int>(parse_int("train.max_steps", get("train.max_steps")));
  t.lr = parse_double("train.lr", get("train.lr"));
  t.beta1 = parse_double("train.beta1", get("train.beta1"));
  t.beta2 = parse_double("train.beta2", get("train.beta2"));
  t.eps = parse_double("train.eps", get("train.eps"));
  t.seed = parse_u64("train.seed", get("train.seed"));
  t.tau_init = parse_double("tau.init", get("tau.init"));
  t.tau_cap_start = parse_double("tau.cap_start", get("tau.cap_start"));
  t.tau_cap_end = parse_double("tau.cap_end", get("tau.cap_end"));
  t.tau_shape = parse_tau_shape(get("tau.cap"));
  if (t.epochs < 0) throw ConfigError("train.epochs", "must be nonnegative");
  if (t.batch < 2) throw ConfigError("train.batch", "must be >= 2 (contrastive loss needs negatives)");
  return t;
}

DatasetSpec RunConfig::dataset() const {
  DatasetSpec d;
  d.n_pairs = static_cast<int>(parse_int("data.n_pairs", get("data.n_pairs")));
  d.appearance_classes = static_cast<int>(parse_int("data.appearance_classes", get("data.appearance_classes")));
  d.order_classes = static_cast<int>(parse_int("data.order_classes", get("data.order_classes")));
  d.frames = static_cast<int>(parse_int("data.frames", get("data.frames")));
  d.patches = static_cast<int>(parse_int("data.patches", get("data.patches")));
  d.patch_dim = static_cast<int>(parse_int("data.patch_dim", get("data.patch_dim")));
  d.noise_std = parse_double("data.noise_std", get("data.noise_std"));
  d.template_len = static_cast<int>(parse_int("data.template_len", get("data.template_len")));
  d.seed = parse_u64("data.seed", get("data.seed"));
  return d;
}

std::string RunConfig::documented_defaults() {
  std::string out;
  for (const KeySpec& k : kKeys) {
    out += k.key;
    out += " = ";
    out += k.def;
    out += "  # ";
    out += k.doc;
    out += '\n';
  }
  return out;
}

}  // namespace mva
