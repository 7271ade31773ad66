#include "qaf/run_config.hpp"

#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "qaf/errors.hpp"
#include "qaf/io.hpp"

namespace qaf {
namespace {

using boost::property_tree::ptree;

std::string join_u64(std::span<const std::uint64_t> v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out.push_back(',');
    out += std::to_string(v[i]);
  }
  return out.empty() ? "-" : out;
}

std::vector<std::uint64_t> split_u64(std::string_view text) {
  std::vector<std::uint64_t> out;
  if (io::trim(text) == "-") return out;
  for (auto part : io::split(text, ',')) out.push_back(io::parse_u64(io::trim(part)));
  return out;
}

// Binds every INI key to a field once, so writing and reading cannot drift.
class Binder {
 public:
  enum class Mode { write, read };
  Binder(Mode mode, ptree& tree) : mode_(mode), tree_(tree) {}

  void f64(const std::string& key, double& v) {
    bind(key, [&] { return io::format_double(v); }, [&](std::string_view s) { v = io::parse_double(s); });
  }
  void size(const std::string& key, std::size_t& v) {
    bind(key, [&] { return std::to_string(v); }, [&](std::string_view s) { v = io::parse_size(s); });
  }
  void u64(const std::string& key, std::uint64_t& v) {
    bind(key, [&] { return std::to_string(v); }, [&](std::string_view s) { v = io::parse_u64(s); });
  }
  void flag(const std::string& key, bool& v) {
    bind(key, [&] { return std::string(v ? "true" : "false"); }, [&](std::string_view s) {
      if (s == "true" || s == "1") {
        v = true;
      } else if (s == "false" || s == "0") {
        v = false;
      } else {
        throw ConfigError(key + ": expected true or false, got '" + std::string(s) + "'");
      }
    });
  }
  void path(const std::string& key, std::filesystem::path& v) {
    bind(key, [&] { return v.string(); }, [&](std::string_view s) { v = std::string(s); });
  }
  void sizes(const std::string& key, std::vector<std::size_t>& v) {
    bind(key, [&] { return io::join_sizes(v); }, [&](std::string_view s) { v = io::split_sizes(s); });
  }
  void u64s(const std::string& key, std::vector<std::uint64_t>& v) {
    bind(key, [&] { return join_u64(v); }, [&](std::string_view s) { v = split_u64(s); });
  }
  template <class Fmt, class Parse>
  void custom(const std::string& key, Fmt fmt, Parse parse) {
    bind(key, fmt, parse);
  }

  void ensure_all_known() const {
    for (const auto& [section, keys] : tree_) {
      if (keys.empty() && !keys.data().empty()) {
        throw ConfigError("key '" + section + "' is outside any section");
      }
      for (const auto& [key, value] : keys) {
        if (!known_.count(section + "." + key)) {
          throw ConfigError("unknown config key " + section + "." + key);
        }
      }
    }
  }

 private:
  template <class Fmt, class Parse>
  void bind(const std::string& key, Fmt fmt, Parse parse) {
    known_.insert(key);
    if (mode_ == Mode::write) {
      tree_.put(ptree::path_type(key, '.'), fmt());
      return;
    }
    auto value = tree_.get_optional<std::string>(ptree::path_type(key, '.'));
    if (!value) return;
    try {
      parse(io::trim(*value));
    } catch (const FormatError& e) {
      throw ConfigError("config key " + key + ": " + e.what());
    }
  }

  Mode mode_;
  ptree& tree_;
  std::set<std::string> known_;
};

void bind_all(Binder& b, RunConfig& c) {
  b.u64("run.seed", c.seed);
  b.size("run.threads", c.threads);
  b.f64("run.alpha", c.alpha);
  b.f64("run.dt_obs", c.dt_obs);

  b.path("paths.data_dir", c.data_dir);
  b.path("paths.checkpoint_dir", c.checkpoint_dir);
  b.path("paths.report_dir", c.report_dir);

  GeneratorParams& g = c.generator;
  b.f64("data.grid_step", g.grid_step);
  b.f64("data.horizon", g.horizon);
  b.f64("data.p_stable", g.p_stable);
  b.f64("data.fault_start_min", g.fault_start_min);
  b.f64("data.fault_start_max", g.fault_start_max);
  b.f64("data.clearing_min", g.clearing_min);
  b.f64("data.clearing_max", g.clearing_max);
  b.f64("data.load_min", g.load_min);
  b.f64("data.load_max", g.load_max);
  b.f64("data.depth_min", g.depth_min);
  b.f64("data.depth_max", g.depth_max);
  b.f64("data.damping_min", g.damping_min);
  b.f64("data.damping_max", g.damping_max);
  b.f64("data.unstable_damping_min", g.unstable_damping_min);
  b.f64("data.freq_min", g.freq_min);
  b.f64("data.freq_max", g.freq_max);
  b.f64("data.recovery_min", g.recovery_min);
  b.f64("data.recovery_max", g.recovery_max);
  b.f64("data.settle_min", g.settle_min);
  b.f64("data.settle_max", g.settle_max);
  b.f64("data.noise_std", g.noise_std);
  b.u64s("data.buses", c.buses);
  b.u64("data.target_bus", c.target_bus);
  b.size("data.n_per_bus", c.n_per_bus);
  b.size("data.n_target", c.n_target);
  b.size("data.n_cal", c.n_cal);
  b.size("data.n_test", c.n_test);
  b.size("data.n_loc", c.n_loc);
  b.size("data.m", c.model.m);
  b.f64("data.t_max_input", c.t_max_input);

  b.flag("target_bias.enabled", c.target_bias_override);
  b.f64("target_bias.depth_shift", c.target_bias.depth_shift);
  b.f64("target_bias.damping_shift", c.target_bias.damping_shift);
  b.f64("target_bias.freq_shift", c.target_bias.freq_shift);
  b.f64("target_bias.settle_shift", c.target_bias.settle_shift);
  b.f64("target_bias.v0_shift", c.target_bias.v0_shift);

  ModelConfig& m = c.model;
  b.size("model.token_size", m.token_size);
  b.size("model.d", m.d);
  b.size("model.p", m.p);
  b.size("model.s", m.s);
  b.size("model.fourier_m", m.fourier_m);
  b.f64("model.fourier_sigma", m.fourier_sigma);
  b.sizes("model.branch_hidden", m.branch_hidden);
  b.sizes("model.trunk_hidden", m.trunk_hidden);
  b.sizes("model.head_hidden", m.head_hidden);
  b.flag("model.attention_mask", m.attention_mask);

  FedConfig& f = c.fed;
  b.size("fed.n_clients", f.n_clients);
  b.size("fed.k_local", f.k_local);
  b.size("fed.total_rounds", f.total_rounds);
  b.size("fed.batch_size", f.batch_size);
  b.f64("fed.lr", f.adam.lr);
  b.f64("fed.beta1", f.adam.beta1);
  b.f64("fed.beta2", f.adam.beta2);
  b.f64("fed.eps", f.adam.eps);
  b.custom("fed.moment_policy", [&] { return std::string(to_string(f.moment_policy)); },
           [&](std::string_view s) { f.moment_policy = parse_moment_policy(s); });

  FineTuneConfig& t = c.finetune;
  b.size("finetune.max_epochs", t.max_epochs);
  b.size("finetune.patience", t.patience);
  b.f64("finetune.val_fraction", t.val_fraction);
  b.size("finetune.batch_size", t.batch_size);
  b.f64("finetune.lr", t.adam.lr);
  b.f64("finetune.beta1", t.adam.beta1);
  b.f64("finetune.beta2", t.adam.beta2);
  b.f64("finetune.eps", t.adam.eps);

  b.custom("conformal.mode", [&] { return std::string(to_string(c.calibration_mode)); },
           [&](std::string_view s) { c.calibration_mode = parse_calibration_mode(s); });
}

void sync_derived(RunConfig& c) {
  c.fed.seed = c.seed;
  c.fed.threads = c.threads;
  c.finetune.seed = c.seed;
}

}  // namespace

BusBias default_target_bias() {
  BusBias b = default_bus_bias(18);
  b.v0_shift = -0.10;
  b.settle_shift = 0.05;
  b.damping_shift = -0.03;
  return b;
}

ModelConfig default_run_model() {
  ModelConfig c;
  c.token_size = 32;
  return c;
}

FedConfig default_run_fed() {
  FedConfig f;
  f.total_rounds = 4000;
  return f;
}

double RunConfig::resolved_t_max_input() const {
  return t_max_input > 0.0 ? t_max_input : generator.default_t_max_input(dt_obs);
}

BusBias RunConfig::bias_for(std::uint64_t bus_id) const {
  if (target_bias_override && bus_id == target_bus) return target_bias;
  return default_bus_bias(bus_id);
}

ModelConfig RunConfig::resolved_model() const {
  ModelConfig m = model;
  m.alpha = alpha;
  m.t_max_input = resolved_t_max_input();
  m.horizon = generator.horizon;
  return m;
}

AssembleOptions RunConfig::assemble_options(Split split) const {
  return {dt_obs, model.m, n_loc, resolved_t_max_input(), seed, split};
}

void RunConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("run.alpha must lie in (0, 1)");
  if (!(dt_obs > 0.0)) throw ConfigError("run.dt_obs must be > 0");
  if (threads < 1) throw ConfigError("run.threads must be >= 1");
  if (n_loc < 1) throw ConfigError("data.n_loc must be >= 1");
  generator.validate();
  resolved_model().validate();
  fed.validate();
  finetune.validate();
}

std::string serialize_run_config(const RunConfig& config) {
  RunConfig c = config;
  sync_derived(c);
  ptree tree;
  Binder b(Binder::Mode::write, tree);
  bind_all(b, c);
  std::ostringstream os;
  boost::property_tree::write_ini(os, tree);
  return os.str();
}

RunConfig parse_run_config(std::string_view text, std::span<const std::string> overrides,
                           const std::string& source) {
  ptree tree;
  std::istringstream is{std::string(text)};
  try {
    boost::property_tree::read_ini(is, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(source + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  for (const std::string& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || o.find('.') == std::string::npos || o.find('.') > eq) {
      throw ConfigError("override '" + o + "' is not of the form section.key=value");
    }
    tree.put(ptree::path_type(o.substr(0, eq), '.'), o.substr(eq + 1));
  }
  RunConfig c;
  Binder b(Binder::Mode::read, tree);
  bind_all(b, c);
  b.ensure_all_known();
  sync_derived(c);
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path,
                          std::span<const std::string> overrides) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  }
  return parse_run_config(text, overrides, path.string());
}

void save_run_config(const RunConfig& config, const std::filesystem::path& path) {
  io::write_file(path, serialize_run_config(config));
}

}  // namespace qaf
