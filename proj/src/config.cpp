#include "adkd/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "adkd/errors.hpp"

namespace adkd {
namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

long long parse_ll(const std::string& key, const std::string& v, long long lo, long long hi) {
  try {
    std::size_t used = 0;
    const long long x = std::stoll(v, &used);
    if (used != v.size() || v.empty()) throw std::invalid_argument(v);
    if (x < lo || x > hi) {
      throw ConfigError(key + " = " + v + " is out of range [" + std::to_string(lo) + ", " +
                        std::to_string(hi) + "]");
    }
    return x;
  } catch (const std::logic_error&) {
    throw ConfigError(key + " = \"" + v + "\" is not an integer");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const unsigned long long x = std::stoull(v, &used);
    if (used != v.size() || v.empty() || v[0] == '-') throw std::invalid_argument(v);
    return x;
  } catch (const std::logic_error&) {
    throw ConfigError(key + " = \"" + v + "\" is not an unsigned integer");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size() || v.empty()) throw std::invalid_argument(v);
    if (!std::isfinite(x)) throw ConfigError(key + " must be finite");
    return x;
  } catch (const std::logic_error&) {
    throw ConfigError(key + " = \"" + v + "\" is not a number");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + " = \"" + v + "\" is not a boolean (use true/false)");
}

template <typename T, typename ElemFn>
std::vector<T> parse_list(const std::string& key, const std::string& v, ElemFn&& elem) {
  std::vector<T> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = v.find(',', start);
    const std::string part = trim(v.substr(start, comma == std::string::npos ? comma : comma - start));
    if (part.empty()) throw ConfigError(key + " has an empty list element");
    out.push_back(elem(key, part));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string join_numbers(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += format_number(v[i]);
  }
  return out;
}

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

}  // namespace

std::string format_number(double v) {
  for (int prec = 1; prec <= 17; ++prec) {
    char probe[64];
    std::snprintf(probe, sizeof(probe), "%.*g", prec, v);
    if (std::stod(probe) == v) return probe;
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

TrainConfig TrainConfig::desk_profile() {
  TrainConfig c;
  c.epochs = 16;
  c.batch_size = 8;
  c.lr = 0.05;
  c.seed = 42;
  c.val_fraction = 0.2;
  c.input_size = 64;
  c.attention = AttentionMode::channel;
  c.loss = LossSpec::headline();
  c.stage_channels = {16, 32, 64};
  c.blocks_per_stage = 1;
  c.use_batchnorm = false;
  c.dcam_reduction = 8;
  c.norm_mean = {0.5, 0.5, 0.5};
  c.norm_std = {0.25, 0.25, 0.25};
  return c;
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr >= 0)) throw ConfigError("lr must be >= 0");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw ConfigError("val_fraction must be strictly between 0 and 1");
  }
  if (input_size < 16 || input_size % 16 != 0) {
    throw ConfigError("input_size must be a positive multiple of 16");
  }
  if (stage_channels.size() != 3) throw ConfigError("stage_channels needs exactly 3 values");
  for (int c : stage_channels) {
    if (c < 1) throw ConfigError("stage_channels values must be >= 1");
  }
  if (blocks_per_stage < 1) throw ConfigError("blocks_per_stage must be >= 1");
  if (dcam_reduction < 1) throw ConfigError("dcam_reduction must be >= 1");
  if (norm_mean.size() != 3 || norm_std.size() != 3) {
    throw ConfigError("norm_mean and norm_std need exactly 3 values");
  }
  for (double s : norm_std) {
    if (s == 0.0) throw ConfigError("norm_std values must be non-zero");
  }
  if (loss.terms.empty()) throw ConfigError("loss spec has no terms");
}

std::string canonical_config_text(const TrainConfig& cfg) {
  std::ostringstream o;
  o << "epochs = " << cfg.epochs << "\n";
  o << "batch_size = " << cfg.batch_size << "\n";
  o << "lr = " << format_number(cfg.lr) << "\n";
  o << "seed = " << cfg.seed << "\n";
  o << "val_fraction = " << format_number(cfg.val_fraction) << "\n";
  o << "input_size = " << cfg.input_size << "\n";
  o << "attention = " << attention_mode_name(cfg.attention) << "\n";
  for (const LossTerm& t : cfg.loss.terms) o << "loss = " << LossSpec::term_text(t) << "\n";
  o << "stage_channels = " << join_ints(cfg.stage_channels) << "\n";
  o << "blocks_per_stage = " << cfg.blocks_per_stage << "\n";
  o << "use_batchnorm = " << (cfg.use_batchnorm ? "true" : "false") << "\n";
  o << "data_root = " << cfg.data_root << "\n";
  o << "checkpoint_path = " << cfg.checkpoint_path << "\n";
  o << "dcam_reduction = " << cfg.dcam_reduction << "\n";
  o << "norm_mean = " << join_numbers(cfg.norm_mean) << "\n";
  o << "norm_std = " << join_numbers(cfg.norm_std) << "\n";
  o << "teacher_weights = " << cfg.teacher_weights << "\n";
  return o.str();
}

void for_each_config_line(const std::string& text,
                          const std::function<void(const std::string&, const std::string&, int)>& fn) {
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::size_t hash = raw.find('#');
    if (hash != std::string::npos) raw.resize(hash);
    const std::string line = trim(raw);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected `key = value`, got \"" +
                        line + "\"");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    fn(key, value, line_no);
  }
}

void apply_config_text(TrainConfig& cfg, const std::string& text, const std::string& source_name) {
  std::set<std::string> seen;
  bool loss_reset = false;
  try {
    for_each_config_line(text, [&](const std::string& key, const std::string& value, int line_no) {
      if (key != "loss" && !seen.insert(key).second) {
        throw ConfigError("line " + std::to_string(line_no) + ": duplicate key \"" + key + "\"");
      }
      if (key == "epochs") cfg.epochs = static_cast<int>(parse_ll(key, value, 0, 1000000));
      else if (key == "batch_size") cfg.batch_size = static_cast<int>(parse_ll(key, value, 1, 1 << 20));
      else if (key == "lr") cfg.lr = parse_double(key, value);
      else if (key == "seed") cfg.seed = parse_u64(key, value);
      else if (key == "val_fraction") cfg.val_fraction = parse_double(key, value);
      else if (key == "input_size") cfg.input_size = static_cast<int>(parse_ll(key, value, 1, 1 << 16));
      else if (key == "attention") cfg.attention = attention_mode_from(value);
      else if (key == "loss") {
        if (!loss_reset) {
          cfg.loss.terms.clear();  // any explicit loss line replaces the profile spec
          loss_reset = true;
        }
        cfg.loss.terms.push_back(LossSpec::parse_term(value));
      } else if (key == "stage_channels") {
        cfg.stage_channels = parse_list<int>(key, value, [](const std::string& k, const std::string& p) {
          return static_cast<int>(parse_ll(k, p, 1, 1 << 16));
        });
      } else if (key == "blocks_per_stage") {
        cfg.blocks_per_stage = static_cast<int>(parse_ll(key, value, 1, 64));
      } else if (key == "use_batchnorm") cfg.use_batchnorm = parse_bool(key, value);
      else if (key == "data_root") cfg.data_root = value;
      else if (key == "checkpoint_path") cfg.checkpoint_path = value;
      else if (key == "dcam_reduction") {
        cfg.dcam_reduction = static_cast<int>(parse_ll(key, value, 1, 1 << 16));
      } else if (key == "norm_mean") {
        cfg.norm_mean = parse_list<double>(key, value, parse_double);
      } else if (key == "norm_std") {
        cfg.norm_std = parse_list<double>(key, value, parse_double);
      } else if (key == "teacher_weights") cfg.teacher_weights = value;
      else throw ConfigError("line " + std::to_string(line_no) + ": unknown key \"" + key + "\"");
    });
  } catch (ConfigError& e) {
    throw ConfigError(source_name + ": " + e.what());
  }
}

void apply_config_file(TrainConfig& cfg, const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config file \"" + path + "\"");
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  apply_config_text(cfg, text, path);
}

std::string config_text_diff(const std::string& stored, const std::string& current,
                             const std::vector<std::string>& ignore_keys) {
  const auto collect = [&](const std::string& text) {
    // Multimap keyed by config key; repeatable keys join their values in order.
    std::map<std::string, std::string> kv;
    for_each_config_line(text, [&](const std::string& key, const std::string& value, int) {
      for (const std::string& ig : ignore_keys) {
        if (key == ig || key.rfind(ig + ".", 0) == 0) return;
      }
      auto [it, fresh] = kv.emplace(key, value);
      if (!fresh) it->second += " | " + value;
    });
    return kv;
  };
  const auto a = collect(stored);
  const auto b = collect(current);
  std::string diff;
  for (const auto& [key, value] : a) {
    auto it = b.find(key);
    if (it == b.end()) {
      diff += "  " + key + ": checkpoint has \"" + value + "\", current config omits it\n";
    } else if (it->second != value) {
      diff += "  " + key + ": checkpoint \"" + value + "\" vs current \"" + it->second + "\"\n";
    }
  }
  for (const auto& [key, value] : b) {
    if (!a.count(key)) {
      diff += "  " + key + ": current has \"" + value + "\", checkpoint omits it\n";
    }
  }
  return diff;
}

}  // namespace adkd
