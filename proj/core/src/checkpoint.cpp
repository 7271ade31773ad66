#include "qaf/checkpoint.hpp"

#include <sstream>

#include "qaf/errors.hpp"
#include "qaf/io.hpp"

namespace qaf {
namespace {

constexpr std::string_view kMagic = "qaf-checkpoint 1";

ModelConfig read_config(io::LineReader& in, std::string_view prefix) {
  const std::string p(prefix);
  ModelConfig c;
  c.m = io::parse_size(in.expect(p + "m"));
  c.token_size = io::parse_size(in.expect(p + "token_size"));
  c.d = io::parse_size(in.expect(p + "d"));
  c.p = io::parse_size(in.expect(p + "p"));
  c.s = io::parse_size(in.expect(p + "s"));
  c.fourier_m = io::parse_size(in.expect(p + "fourier_m"));
  c.fourier_sigma = io::parse_double(in.expect(p + "fourier_sigma"));
  c.branch_hidden = io::split_sizes(in.expect(p + "branch_hidden"));
  c.trunk_hidden = io::split_sizes(in.expect(p + "trunk_hidden"));
  c.head_hidden = io::split_sizes(in.expect(p + "head_hidden"));
  c.alpha = io::parse_double(in.expect(p + "alpha"));
  c.t_max_input = io::parse_double(in.expect(p + "t_max_input"));
  c.horizon = io::parse_double(in.expect(p + "horizon"));
  c.attention_mask = io::parse_size(in.expect(p + "attention_mask")) != 0;
  return c;
}

}  // namespace

std::string serialize_model_config(const ModelConfig& c, std::string_view prefix) {
  std::ostringstream out;
  const std::string p(prefix);
  out << p << "m " << c.m << '\n'
      << p << "token_size " << c.token_size << '\n'
      << p << "d " << c.d << '\n'
      << p << "p " << c.p << '\n'
      << p << "s " << c.s << '\n'
      << p << "fourier_m " << c.fourier_m << '\n'
      << p << "fourier_sigma " << io::format_double(c.fourier_sigma) << '\n'
      << p << "branch_hidden " << io::join_sizes(c.branch_hidden) << '\n'
      << p << "trunk_hidden " << io::join_sizes(c.trunk_hidden) << '\n'
      << p << "head_hidden " << io::join_sizes(c.head_hidden) << '\n'
      << p << "alpha " << io::format_double(c.alpha) << '\n'
      << p << "t_max_input " << io::format_double(c.t_max_input) << '\n'
      << p << "horizon " << io::format_double(c.horizon) << '\n'
      << p << "attention_mask " << (c.attention_mask ? 1 : 0) << '\n';
  return out.str();
}

std::string serialize_checkpoint(const QafModel& model) {
  std::string out;
  out += kMagic;
  out += "\nseed " + std::to_string(model.seed()) + "\n";
  out += serialize_model_config(model.config(), "config.");
  const Tensor& b = model.fourier_matrix();
  out += "fourier " + std::to_string(b.rows()) + " " + io::join_doubles(b.span()) + "\n";
  out += "params " + std::to_string(model.params().size()) + "\n";
  for (std::size_t i = 0; i < model.params().size(); ++i) {
    const Tensor& t = model.params()[i];
    out += "param " + model.param_names()[i] + " " + std::to_string(t.rows()) + " " +
           std::to_string(t.cols()) + " " + io::join_doubles(t.span()) + "\n";
  }
  out += "end\n";
  return out;
}

QafModel parse_checkpoint(std::string_view text, const std::string& source) {
  io::LineReader in(text, source);
  if (in.next() != kMagic) in.fail("not a qaf checkpoint (or unsupported version)");
  const std::uint64_t seed = io::parse_u64(in.expect("seed"));
  ModelConfig config = read_config(in, "config.");
  try {
    config.validate();
  } catch (const ConfigError& e) {
    in.fail(e.what());
  }

  QafModel model(config, seed);

  auto fourier = io::split(in.expect("fourier"), ' ');
  if (fourier.empty() || io::parse_size(fourier[0]) != config.fourier_m ||
      fourier.size() != config.fourier_m + 1) {
    in.fail("fourier row count does not match config");
  }
  Tensor b(config.fourier_m, 1);
  for (std::size_t r = 0; r < config.fourier_m; ++r) b[r] = io::parse_double(fourier[r + 1]);
  model.set_fourier_matrix(std::move(b));

  const std::size_t count = io::parse_size(in.expect("params"));
  if (count != model.params().size()) in.fail("parameter count does not match architecture");
  for (std::size_t i = 0; i < count; ++i) {
    auto fields = io::split(in.expect("param"), ' ');
    if (fields.size() < 3 || fields[0] != model.param_names()[i]) {
      in.fail("expected parameter " + model.param_names()[i]);
    }
    Tensor& t = model.params()[i];
    if (io::parse_size(fields[1]) != t.rows() || io::parse_size(fields[2]) != t.cols() ||
        fields.size() != 3 + t.size()) {
      in.fail("shape mismatch for " + model.param_names()[i]);
    }
    for (std::size_t k = 0; k < t.size(); ++k) t[k] = io::parse_double(fields[3 + k]);
  }
  if (in.next() != "end") in.fail("missing end marker");
  return model;
}

void save_checkpoint(const QafModel& model, const std::filesystem::path& path) {
  io::write_file(path, serialize_checkpoint(model));
}

QafModel load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(io::read_file(path), path.string());
}

std::string checkpoint_hash(const QafModel& model) {
  return io::sha256_hex(serialize_checkpoint(model));
}

}  // namespace qaf
