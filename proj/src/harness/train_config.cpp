#include "ctp/harness/train_config.hpp"

#include <algorithm>
#include <charconv>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>

namespace ctp {

const char* to_string(Objective o) {
  switch (o) {
    case Objective::causal_l2: return "causal_l2";
    case Objective::variety_k: return "variety_k";
    case Objective::causal_nll: return "causal_nll";
    case Objective::causal_gan: return "causal_gan";
  }
  return "?";
}

Objective parse_objective(const std::string& s) {
  if (s == "causal_l2") return Objective::causal_l2;
  if (s == "variety_k") return Objective::variety_k;
  if (s == "causal_nll") return Objective::causal_nll;
  if (s == "causal_gan") return Objective::causal_gan;
  throw ContractError("unknown objective '" + s + "' (expected causal_l2, variety_k, causal_nll or causal_gan)");
}

std::vector<ConfigIssue> TrainConfig::issues() const {
  std::vector<ConfigIssue> out;
  try {
    model.validate();
  } catch (const ContractError& e) {
    out.push_back({0, e.what()});
  }
  if (objective == Objective::causal_nll && model.family != Family::stgcnn) {
    out.push_back({0, "objective causal_nll needs the stgcnn family"});
  }
  if ((objective == Objective::variety_k || objective == Objective::causal_gan) && model.family != Family::stgat) {
    out.push_back({0, std::string("objective ") + to_string(objective) + " needs the stgat family"});
  }
  if (causal && intervention == InterventionMode::mean && decay <= 0.0) {
    out.push_back({0, "mean intervention needs decay > 0"});
  }
  return out;
}

void TrainConfig::validate() const {
  auto list = issues();
  if (!list.empty()) throw ConfigError(std::move(list));
}

InterventionSpec TrainConfig::intervention_spec(Phase phase) const {
  InterventionSpec s;
  s.mode = intervention;
  s.phase = phase;
  s.half_width = half_width;
  s.decay = decay;
  s.rng = Rng::derive(seed, 0x1e7e);
  return s;
}

bool TrainConfig::operator==(const TrainConfig& o) const {
  return echo_train_config(*this) == echo_train_config(o);
}

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t hash) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    hash ^= p[i];
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

namespace {

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::optional<long long> parse_int(const std::string& s) {
  long long v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<double> parse_double(const std::string& s) {
  double v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) return std::nullopt;
  return v;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Each setter returns an error message, empty on success.
struct Field {
  std::string section;
  std::string key;
  std::function<std::string(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

Field int_field(std::string section, std::string key, std::function<Index&(TrainConfig&)> ref, long long min) {
  return {section, key,
          [ref, min, key](TrainConfig& c, const std::string& v) -> std::string {
            auto x = parse_int(v);
            if (!x) return key + ": expected an integer, got '" + v + "'";
            if (*x < min) return key + " must be >= " + std::to_string(min) + ", got " + v;
            ref(c) = static_cast<Index>(*x);
            return "";
          },
          [ref](const TrainConfig& c) { return std::to_string(ref(const_cast<TrainConfig&>(c))); }};
}

Field real_field(std::string section, std::string key, std::function<double&(TrainConfig&)> ref, double lo,
                 double hi, bool open_lo) {
  return {section, key,
          [ref, lo, hi, open_lo, key](TrainConfig& c, const std::string& v) -> std::string {
            auto x = parse_double(v);
            if (!x) return key + ": expected a number, got '" + v + "'";
            const bool ok = (open_lo ? *x > lo : *x >= lo) && *x <= hi;
            if (!ok) {
              return key + " must lie in " + (open_lo ? "(" : "[") + format_double(lo) + ", " + format_double(hi) +
                     "], got " + v;
            }
            ref(c) = *x;
            return "";
          },
          [ref](const TrainConfig& c) { return format_double(ref(const_cast<TrainConfig&>(c))); }};
}

template <typename Parse, typename Show>
Field enum_field(std::string section, std::string key, Parse parse, Show show) {
  return {section, key,
          [parse, key](TrainConfig& c, const std::string& v) -> std::string {
            try {
              parse(c, v);
            } catch (const ContractError& e) {
              return key + ": " + e.what();
            }
            return "";
          },
          show};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<Field> f;
    f.push_back(enum_field(
        "model", "family", [](TrainConfig& c, const std::string& v) { c.model.family = parse_family(v); },
        [](const TrainConfig& c) { return std::string(to_string(c.model.family)); }));
    f.push_back(enum_field(
        "model", "output", [](TrainConfig& c, const std::string& v) { c.model.output = parse_output_mode(v); },
        [](const TrainConfig& c) { return std::string(to_string(c.model.output)); }));
    f.push_back(int_field("model", "embed_dim", [](TrainConfig& c) -> Index& { return c.model.embed_dim; }, 1));
    f.push_back(int_field("model", "motion_hidden", [](TrainConfig& c) -> Index& { return c.model.motion_hidden; }, 1));
    f.push_back(int_field("model", "gat_heads", [](TrainConfig& c) -> Index& { return c.model.gat_heads; }, 1));
    f.push_back(int_field("model", "gat_head_dim", [](TrainConfig& c) -> Index& { return c.model.gat_head_dim; }, 1));
    f.push_back(int_field("model", "gat_out_dim", [](TrainConfig& c) -> Index& { return c.model.gat_out_dim; }, 1));
    f.push_back(int_field("model", "graph_hidden", [](TrainConfig& c) -> Index& { return c.model.graph_hidden; }, 1));
    f.push_back(int_field("model", "noise_dim", [](TrainConfig& c) -> Index& { return c.model.noise_dim; }, 0));
    f.push_back(int_field("model", "channels", [](TrainConfig& c) -> Index& { return c.model.channels; }, 1));
    f.push_back(int_field("model", "st_layers", [](TrainConfig& c) -> Index& { return c.model.st_layers; }, 1));
    f.push_back(int_field("model", "kernel", [](TrainConfig& c) -> Index& { return c.model.kernel; }, 1));
    f.push_back(int_field("model", "txp_layers", [](TrainConfig& c) -> Index& { return c.model.txp_layers; }, 1));
    f.push_back(int_field("model", "txp_kernel", [](TrainConfig& c) -> Index& { return c.model.txp_kernel; }, 1));

    f.push_back({"intervention", "enabled",
                 [](TrainConfig& c, const std::string& v) -> std::string {
                   if (v == "true") c.causal = true;
                   else if (v == "false") c.causal = false;
                   else return "enabled: expected true or false, got '" + v + "'";
                   return "";
                 },
                 [](const TrainConfig& c) { return std::string(c.causal ? "true" : "false"); }});
    f.push_back(enum_field(
        "intervention", "mode",
        [](TrainConfig& c, const std::string& v) { c.intervention = parse_intervention_mode(v); },
        [](const TrainConfig& c) { return std::string(to_string(c.intervention)); }));
    f.push_back(real_field("intervention", "half_width", [](TrainConfig& c) -> double& { return c.half_width; }, 0.0,
                           inf, true));
    f.push_back(real_field("intervention", "decay", [](TrainConfig& c) -> double& { return c.decay; }, 0.0, 0.999999,
                           false));

    f.push_back(enum_field(
        "train", "objective", [](TrainConfig& c, const std::string& v) { c.objective = parse_objective(v); },
        [](const TrainConfig& c) { return std::string(to_string(c.objective)); }));
    f.push_back(int_field("train", "variety_k", [](TrainConfig& c) -> Index& { return c.variety_k; }, 1));
    f.push_back(real_field("train", "gan_weight", [](TrainConfig& c) -> double& { return c.gan_weight; }, 0.0, inf,
                           false));
    f.push_back(int_field("train", "disc_hidden", [](TrainConfig& c) -> Index& { return c.disc_hidden; }, 1));
    f.push_back(int_field("train", "epochs", [](TrainConfig& c) -> Index& { return c.epochs; }, 1));
    f.push_back(int_field("train", "batch_size", [](TrainConfig& c) -> Index& { return c.batch_size; }, 1));
    f.push_back(real_field("train", "learning_rate", [](TrainConfig& c) -> double& { return c.adam.learning_rate; },
                           0.0, inf, true));
    f.push_back(real_field("train", "beta1", [](TrainConfig& c) -> double& { return c.adam.beta1; }, 0.0, 0.999999,
                           false));
    f.push_back(real_field("train", "beta2", [](TrainConfig& c) -> double& { return c.adam.beta2; }, 0.0, 0.999999,
                           false));
    f.push_back(real_field("train", "epsilon", [](TrainConfig& c) -> double& { return c.adam.epsilon; }, 0.0, inf,
                           true));
    f.push_back(real_field("train", "clip_norm", [](TrainConfig& c) -> double& { return c.clip_norm; }, 0.0, inf,
                           false));
    f.push_back({"train", "seed",
                 [](TrainConfig& c, const std::string& v) -> std::string {
                   std::uint64_t x = 0;
                   auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
                   if (ec != std::errc() || end != v.data() + v.size()) {
                     return "seed: expected a non-negative integer, got '" + v + "'";
                   }
                   c.seed = x;
                   return "";
                 },
                 [](const TrainConfig& c) { return std::to_string(c.seed); }});
    f.push_back(int_field("train", "eval_k", [](TrainConfig& c) -> Index& { return c.eval_k; }, 1));

    f.push_back({"data", "held_out",
                 [](TrainConfig& c, const std::string& v) -> std::string {
                   if (v.find_first_of(" \t,") != std::string::npos) return "held_out: scene names have no spaces";
                   c.held_out = v;
                   return "";
                 },
                 [](const TrainConfig& c) { return c.held_out; }});
    f.push_back(int_field("data", "train_stride", [](TrainConfig& c) -> Index& { return c.train_stride; }, 1));
    f.push_back(int_field("data", "test_stride", [](TrainConfig& c) -> Index& { return c.test_stride; }, 1));
    return f;
  }();
  return table;
}

const std::vector<std::string> kSections{"model", "intervention", "train", "data"};

std::string echo_sections(const TrainConfig& c, std::size_t count) {
  std::ostringstream out;
  for (std::size_t s = 0; s < count; ++s) {
    if (s) out << '\n';
    out << '[' << kSections[s] << "]\n";
    for (const auto& f : fields()) {
      if (f.section == kSections[s]) out << f.key << " = " << f.get(c) << '\n';
    }
  }
  return out.str();
}

}  // namespace

TrainConfig parse_train_config(const std::string& text) {
  struct Entry {
    std::size_t line;
    std::string value;
  };
  std::map<std::pair<std::string, std::string>, Entry> entries;
  std::vector<ConfigIssue> issues;

  std::istringstream in(text);
  std::string raw, section;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        issues.push_back({lineno, "malformed section header '" + line + "'"});
        continue;
      }
      section = trim(line.substr(1, line.size() - 2));
      if (std::find(kSections.begin(), kSections.end(), section) == kSections.end()) {
        issues.push_back({lineno, "unknown section [" + section + "]"});
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      issues.push_back({lineno, "expected 'key = value', got '" + line + "'"});
      continue;
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) {
      issues.push_back({lineno, "key '" + key + "' appears before any section"});
      continue;
    }
    const bool known = std::any_of(fields().begin(), fields().end(),
                                   [&](const Field& f) { return f.section == section && f.key == key; });
    if (!known) {
      if (std::find(kSections.begin(), kSections.end(), section) != kSections.end()) {
        issues.push_back({lineno, "unknown key '" + key + "' in [" + section + "]"});
      }
      continue;
    }
    auto [it, fresh] = entries.emplace(std::pair{section, key}, Entry{lineno, value});
    if (!fresh) issues.push_back({lineno, "duplicate key '" + key + "' (first set on line " +
                                              std::to_string(it->second.line) + ")"});
  }

  // The family picks the size defaults and the default objective, so it goes first.
  TrainConfig config;
  if (auto it = entries.find({"model", "family"}); it != entries.end()) {
    try {
      const Family fam = parse_family(it->second.value);
      config.model = fam == Family::stgat ? ModelConfig::stgat_default() : ModelConfig::stgcnn_default();
      config.objective = fam == Family::stgat ? Objective::causal_l2 : Objective::causal_nll;
    } catch (const ContractError& e) {
      issues.push_back({it->second.line, std::string("family: ") + e.what()});
    }
  }
  for (const auto& f : fields()) {
    if (f.section == "model" && f.key == "family") continue;
    auto it = entries.find({f.section, f.key});
    if (it == entries.end()) continue;
    const std::string err = f.set(config, it->second.value);
    if (!err.empty()) issues.push_back({it->second.line, err});
  }
  if (issues.empty()) {
    for (auto issue : config.issues()) {
      if (issue.message.find("objective") != std::string::npos) {
        if (auto it = entries.find({"train", "objective"}); it != entries.end()) issue.line = it->second.line;
      }
      issues.push_back(std::move(issue));
    }
  }
  if (!issues.empty()) {
    std::stable_sort(issues.begin(), issues.end(),
                     [](const ConfigIssue& a, const ConfigIssue& b) { return a.line < b.line; });
    throw ConfigError(std::move(issues));
  }
  return config;
}

std::string echo_train_config(const TrainConfig& config) { return echo_sections(config, kSections.size()); }

std::uint64_t config_digest(const TrainConfig& config) {
  const std::string text = echo_sections(config, 2);
  return fnv1a(text.data(), text.size());
}

}  // namespace ctp
