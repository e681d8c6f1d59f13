#include "hns/config.hpp"

#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>
#include <vector>

#include "hns/errors.hpp"

namespace hns {

using json = nlohmann::json;

std::filesystem::path DataConfig::resolved_root() const {
  if (!root.empty()) return root;
  if (const char* env = std::getenv("HNS_DATA_ROOT"); env != nullptr && *env) return env;
  return ".";
}

DatasetSpec RunConfig::dataset(const std::string& split) const {
  DatasetSpec spec;
  spec.split = split;
  const auto root = data.resolved_root() / split;
  spec.image_dir = root / data.image_subdir;
  spec.mask_dir = root / data.mask_subdir;
  spec.crop_size = data.crop_size;
  spec.seed = data.seed;
  spec.tile_stride = data.tile_stride;
  return spec;
}

namespace {

struct Field {
  const char* key;
  std::function<json(const RunConfig&)> get;
  std::function<void(RunConfig&, const json&)> set;
};

template <typename T>
T as(const json& v, const char* key) {
  try {
    if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) throw ConfigError("");
    } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
      if (!v.is_number_integer()) throw ConfigError("");
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError("");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError("");
    }
    return v.get<T>();
  } catch (const std::exception&) {
    throw ConfigError(std::string("invalid value for ") + key + ": " + v.dump());
  }
}

std::vector<int64_t> int_list(const json& v, const char* key) {
  if (!v.is_array()) throw ConfigError(std::string(key) + " must be an array of integers");
  std::vector<int64_t> out;
  for (const auto& e : v) out.push_back(as<int64_t>(e, key));
  return out;
}

#define HNS_FIELD(section, name, member, type)                                   \
  Field {                                                                       \
    #section "." #name, [](const RunConfig& c) { return json(c.member); },       \
        [](RunConfig& c, const json& v) { c.member = as<type>(v, #section "." #name); } \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"model.variant", [](const RunConfig& c) { return json(std::string(to_string(c.model.variant))); },
            [](RunConfig& c, const json& v) {
              c.model.apply_variant(parse_variant(as<std::string>(v, "model.variant")));
            }},
      Field{"model.widths",
            [](const RunConfig& c) { return json(std::vector<int64_t>(c.model.widths.begin(), c.model.widths.end())); },
            [](RunConfig& c, const json& v) {
              auto w = int_list(v, "model.widths");
              if (w.size() != 4) throw ConfigError("model.widths needs exactly four entries");
              std::copy(w.begin(), w.end(), c.model.widths.begin());
            }},
      HNS_FIELD(model, width_divisor, model.width_divisor, int64_t),
      Field{"model.gnn_levels", [](const RunConfig& c) { return json(c.model.gnn_levels); },
            [](RunConfig& c, const json& v) {
              auto l = int_list(v, "model.gnn_levels");
              c.model.gnn_levels.assign(l.begin(), l.end());
            }},
      HNS_FIELD(model, enable_border_heads, model.enable_border_heads, bool),
      HNS_FIELD(model, enable_upper_stream, model.enable_upper_stream, bool),
      HNS_FIELD(model, enable_lower_stream, model.enable_lower_stream, bool),
      HNS_FIELD(model, attention_dim, model.attention_dim, int64_t),
      HNS_FIELD(model, latent_nodes, model.latent_nodes, int64_t),
      HNS_FIELD(model, latent_dim, model.latent_dim, int64_t),
      HNS_FIELD(model, border_channels, model.border_channels, int64_t),
      HNS_FIELD(model, consistency_weight, model.consistency_weight, double),
      Field{"model.norm", [](const RunConfig& c) { return json(to_string(c.model.norm)); },
            [](RunConfig& c, const json& v) { c.model.norm = parse_norm(as<std::string>(v, "model.norm")); }},
      HNS_FIELD(data, root, data.root, std::string),
      HNS_FIELD(data, image_subdir, data.image_subdir, std::string),
      HNS_FIELD(data, mask_subdir, data.mask_subdir, std::string),
      HNS_FIELD(data, train_split, data.train_split, std::string),
      HNS_FIELD(data, val_split, data.val_split, std::string),
      HNS_FIELD(data, test_split, data.test_split, std::string),
      HNS_FIELD(data, crop_size, data.crop_size, int),
      HNS_FIELD(data, seed, data.seed, uint64_t),
      HNS_FIELD(data, tile_stride, data.tile_stride, int),
      HNS_FIELD(train, batch_size, train.batch_size, int),
      HNS_FIELD(train, epochs, train.epochs, int),
      HNS_FIELD(train, learning_rate, train.learning_rate, double),
      HNS_FIELD(train, beta1, train.beta1, double),
      HNS_FIELD(train, beta2, train.beta2, double),
      HNS_FIELD(train, weight_decay, train.weight_decay, double),
      HNS_FIELD(train, seed, train.seed, uint64_t),
      HNS_FIELD(train, checkpoint_dir, train.checkpoint_dir, std::string),
      HNS_FIELD(train, eval_interval, train.eval_interval, int),
      HNS_FIELD(train, max_steps, train.max_steps, int64_t),
  };
  return table;
}

#undef HNS_FIELD

const Field& find_field(const std::string& key) {
  for (const auto& f : fields()) {
    if (key == f.key) return f;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Drops a trailing '#' comment that is not inside a string.
std::string strip_comment(const std::string& line) {
  bool in_string = false;
  for (size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '\\' && in_string) {
      ++i;
    } else if (line[i] == '"') {
      in_string = !in_string;
    } else if (line[i] == '#' && !in_string) {
      return line.substr(0, i);
    }
  }
  return line;
}

class ValueParser {
 public:
  explicit ValueParser(const std::string& text) : s_(text) {}

  json parse() {
    auto v = value();
    skip_space();
    if (pos_ != s_.size()) fail("trailing characters");
    return v;
  }

 private:
  json value() {
    skip_space();
    if (pos_ >= s_.size()) fail("missing value");
    const char c = s_[pos_];
    if (c == '"') return string();
    if (c == '[') return array();
    if (s_.compare(pos_, 4, "true") == 0) {
      pos_ += 4;
      return true;
    }
    if (s_.compare(pos_, 5, "false") == 0) {
      pos_ += 5;
      return false;
    }
    return number();
  }

  json string() {
    std::string out;
    ++pos_;
    while (pos_ < s_.size() && s_[pos_] != '"') {
      char c = s_[pos_++];
      if (c == '\\') {
        if (pos_ >= s_.size()) fail("bad escape");
        const char e = s_[pos_++];
        switch (e) {
          case 'n': c = '\n'; break;
          case 't': c = '\t'; break;
          case '"': c = '"'; break;
          case '\\': c = '\\'; break;
          default: fail("unsupported escape");
        }
      }
      out.push_back(c);
    }
    if (pos_ >= s_.size()) fail("unterminated string");
    ++pos_;
    return out;
  }

  json array() {
    json out = json::array();
    ++pos_;
    skip_space();
    if (pos_ < s_.size() && s_[pos_] == ']') {
      ++pos_;
      return out;
    }
    while (true) {
      out.push_back(value());
      skip_space();
      if (pos_ >= s_.size()) fail("unterminated array");
      if (s_[pos_] == ',') {
        ++pos_;
        skip_space();
        if (pos_ < s_.size() && s_[pos_] == ']') {
          ++pos_;
          return out;
        }
        continue;
      }
      if (s_[pos_] == ']') {
        ++pos_;
        return out;
      }
      fail("expected ',' or ']'");
    }
  }

  json number() {
    const size_t start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.' ||
                                s_[pos_] == '-' || s_[pos_] == '+' || s_[pos_] == '_')) {
      ++pos_;
    }
    std::string token = s_.substr(start, pos_ - start);
    std::erase(token, '_');
    if (token.empty()) fail("expected a value");
    const bool is_float = token.find_first_of(".eE") != std::string::npos && token.find("0x") != 0;
    try {
      size_t used = 0;
      if (is_float) {
        const double d = std::stod(token, &used);
        if (used == token.size()) return d;
      } else {
        if (token[0] == '-') {
          const long long v = std::stoll(token, &used);
          if (used == token.size()) return v;
        } else {
          const unsigned long long v = std::stoull(token, &used);
          if (used == token.size()) return v;
        }
      }
    } catch (const std::exception&) {
    }
    fail("not a number: " + token);
    return {};
  }

  void skip_space() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }

  [[noreturn]] void fail(const std::string& what) {
    throw ConfigError("cannot parse value '" + s_ + "': " + what);
  }

  const std::string& s_;
  size_t pos_ = 0;
};

std::string toml_literal(const json& v) {
  if (v.is_number_float()) {
    // Shortest text that reads back to the same double.
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v.get<double>());
    std::string text(buf, res.ptr);
    if (text.find_first_of(".eEn") == std::string::npos) text += ".0";
    return text;
  }
  if (v.is_array()) {
    std::string out = "[";
    for (size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + toml_literal(v[i]);
    return out + "]";
  }
  return v.dump();
}

}  // namespace

json parse_toml_value(const std::string& literal) { return ValueParser(literal).parse(); }

void RunConfig::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  const auto key = trim(assignment.substr(0, eq));
  const auto raw = trim(assignment.substr(eq + 1));
  const auto& field = find_field(key);
  json value;
  try {
    value = parse_toml_value(raw);
  } catch (const ConfigError&) {
    value = raw;  // bare string
  }
  field.set(*this, value);
}

void RunConfig::validate() const {
  model.validate();
  if (data.crop_size < 32 || data.crop_size % 32 != 0) {
    throw ConfigError("data.crop_size must be a positive multiple of 32");
  }
  if (data.tile_stride < 0 || data.tile_stride % 32 != 0) {
    throw ConfigError("data.tile_stride must be 0 or a multiple of 32");
  }
  if (train.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (train.epochs < 0) throw ConfigError("train.epochs must be >= 0");
  if (!(train.learning_rate > 0.0)) throw ConfigError("train.learning_rate must be > 0");
  if (train.eval_interval < 1) throw ConfigError("train.eval_interval must be >= 1");
  if (train.max_steps < 0) throw ConfigError("train.max_steps must be >= 0");
}

std::string RunConfig::to_toml() const {
  std::ostringstream out;
  std::string section;
  for (const auto& f : fields()) {
    const std::string key = f.key;
    const auto dot = key.find('.');
    const auto sec = key.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) out << "\n";
      out << "[" << sec << "]\n";
      section = sec;
    }
    out << key.substr(dot + 1) << " = " << toml_literal(f.get(*this)) << "\n";
  }
  return out.str();
}

RunConfig RunConfig::from_toml(const std::string& text) {
  RunConfig config;
  std::istringstream in(text);
  std::string line, section;
  int line_no = 0;
  // The variant is applied first so explicit per-field values can follow it.
  std::vector<std::pair<std::string, json>> assignments;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(line_no) + ": bad section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const auto key = trim(line.substr(0, eq));
    const auto full = section.empty() ? key : section + "." + key;
    try {
      assignments.emplace_back(full, parse_toml_value(trim(line.substr(eq + 1))));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  std::stable_partition(assignments.begin(), assignments.end(),
                        [](const auto& a) { return a.first == "model.variant"; });
  for (const auto& [key, value] : assignments) find_field(key).set(config, value);
  return config;
}

json RunConfig::to_json() const {
  json j = json::object();
  for (const auto& f : fields()) {
    const std::string key = f.key;
    const auto dot = key.find('.');
    j[key.substr(0, dot)][key.substr(dot + 1)] = f.get(*this);
  }
  return j;
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig config;
  if (j.contains("model") && j["model"].contains("variant")) {
    find_field("model.variant").set(config, j["model"]["variant"]);
  }
  for (const auto& [section, entries] : j.items()) {
    if (!entries.is_object()) throw ConfigError("config section '" + section + "' is not an object");
    for (const auto& [key, value] : entries.items()) {
      if (section == "model" && key == "variant") continue;
      find_field(section + "." + key).set(config, value);
    }
  }
  return config;
}

std::string RunConfig::hash() const {
  const auto text = to_toml();
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << h;
  return s.str();
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return RunConfig::from_toml(buffer.str());
}

void save_run_config(const std::filesystem::path& path, const RunConfig& config) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config " + path.string());
  out << config.to_toml();
  if (!out) throw IoError("cannot write config " + path.string());
}

}  // namespace hns
