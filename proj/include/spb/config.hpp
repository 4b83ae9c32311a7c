#pragma once

// Run configuration files: flat `key = value` lines in TOML syntax.
//
//   # comment
//   degree = 2
//   E = [0.0, -1.0]
//   solver = "newton"

#include "spb/forms.hpp"
#include "spb/mesh.hpp"

#include <array>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <optional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>

namespace spb {

struct RunConfig {
  std::string command = "convergence";  // solve | convergence | diagnose
  int degree = 1;
  int levels = 6;
  int n = 8;
  double tol = 1e-7;
  int maxit = 25;
  std::string solver = "newton";         // newton | picard
  std::string problem = "manufactured";  // manufactured | homogeneous
  std::string out = ".";
  std::string diagonal = "lr-ul";  // lr-ul | ll-ur

  double mu = 1.0;
  double epsilon = 1.0;
  double k0 = 1.0;
  double k1 = 1.0;
  std::array<double, 2> E{0.0, -1.0};
  double alpha = -1.0;
  double beta = 1.0;
  std::optional<double> K_upper;
  std::optional<double> K_lower;
  double C_p = 1.0;
  double C_sob = 1.0;
  int quadrature_degree = 0;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;

  Diagonal mesh_diagonal() const {
    return diagonal == "ll-ur" ? Diagonal::lower_left_to_upper_right : Diagonal::lower_right_to_upper_left;
  }

  /// Physical coefficients only; data functions are attached by the caller.
  ProblemConfig physics() const {
    ProblemConfig p;
    p.mu = mu;
    p.epsilon = epsilon;
    p.k0 = k0;
    p.k1 = k1;
    p.E = Vec2(E[0], E[1]);
    p.alpha = alpha;
    p.beta = beta;
    p.kappa_lipschitz = K_upper;
    p.kappa_monotonicity = K_lower;
    p.poincare = C_p;
    p.sobolev = C_sob;
    p.quadrature_degree = quadrature_degree;
    return p;
  }

  void validate() const {
    auto one_of = [](const std::string& v, std::initializer_list<const char*> options, const char* key) {
      for (const char* o : options)
        if (v == o) return;
      throw ConfigError(std::string(key) + ": invalid value \"" + v + "\"");
    };
    one_of(command, {"solve", "convergence", "diagnose"}, "command");
    one_of(solver, {"newton", "picard"}, "solver");
    one_of(problem, {"manufactured", "homogeneous"}, "problem");
    one_of(diagonal, {"lr-ul", "ll-ur"}, "diagonal");
    if (degree < 1) throw ConfigError("degree must be >= 1");
    if (levels < 2) throw ConfigError("levels must be >= 2");
    if (n < 1) throw ConfigError("n must be >= 1");
    if (!(tol > 0.0)) throw ConfigError("tol must be > 0");
    if (maxit < 1) throw ConfigError("maxit must be >= 1");
    if (quadrature_degree < 0 || quadrature_degree > kMaxQuadratureDegree)
      throw ConfigError("quadrature_degree must be in 0.." + std::to_string(kMaxQuadratureDegree));
    physics().validate();
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::string_view strip_comment(std::string_view s) {
  bool in_string = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') in_string = !in_string;
    if (s[i] == '#' && !in_string) return s.substr(0, i);
  }
  return s;
}

class LineError : public ConfigError {
public:
  LineError(int line, const std::string& what) : ConfigError("line " + std::to_string(line) + ": " + what) {}
};

inline double parse_double(std::string_view v, int line) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw LineError(line, "expected a number, got '" + std::string(v) + "'");
  return out;
}

inline int parse_int(std::string_view v, int line) {
  int out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw LineError(line, "expected an integer, got '" + std::string(v) + "'");
  return out;
}

inline std::string parse_string(std::string_view v, int line) {
  if (v.size() < 2 || v.front() != '"' || v.back() != '"') throw LineError(line, "expected a quoted string");
  const std::string_view body = v.substr(1, v.size() - 2);
  if (body.find('"') != std::string_view::npos || body.find('\\') != std::string_view::npos)
    throw LineError(line, "escapes are not supported in strings");
  return std::string(body);
}

inline std::array<double, 2> parse_pair(std::string_view v, int line) {
  if (v.size() < 2 || v.front() != '[' || v.back() != ']') throw LineError(line, "expected an array [x, y]");
  const std::string_view body = v.substr(1, v.size() - 2);
  const auto comma = body.find(',');
  if (comma == std::string_view::npos || body.find(',', comma + 1) != std::string_view::npos)
    throw LineError(line, "expected exactly two array entries");
  return {parse_double(trim(body.substr(0, comma)), line), parse_double(trim(body.substr(comma + 1)), line)};
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  std::string s = buf;
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

}  // namespace detail

/// Parses configuration text. Missing keys keep their defaults (the unit
/// constants and E = (0, -1) of the manufactured test).
inline RunConfig parse_config_text(std::string_view text) {
  RunConfig cfg;
  std::map<std::string, int, std::less<>> seen;  // key -> line
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = std::min(text.find('\n', pos), text.size());
    ++line_no;
    const std::string_view line = detail::trim(detail::strip_comment(text.substr(pos, end - pos)));
    pos = end + 1;
    if (line.empty()) {
      if (end == text.size()) break;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw detail::LineError(line_no, "expected 'key = value'");
    const std::string key(detail::trim(line.substr(0, eq)));
    const std::string_view value = detail::trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) throw detail::LineError(line_no, "expected 'key = value'");
    if (!seen.emplace(key, line_no).second) throw detail::LineError(line_no, "duplicate key '" + key + "'");

    const int l = line_no;
    if (key == "command") cfg.command = detail::parse_string(value, l);
    else if (key == "degree") cfg.degree = detail::parse_int(value, l);
    else if (key == "levels") cfg.levels = detail::parse_int(value, l);
    else if (key == "n") cfg.n = detail::parse_int(value, l);
    else if (key == "tol") cfg.tol = detail::parse_double(value, l);
    else if (key == "maxit") cfg.maxit = detail::parse_int(value, l);
    else if (key == "solver") cfg.solver = detail::parse_string(value, l);
    else if (key == "problem") cfg.problem = detail::parse_string(value, l);
    else if (key == "out") cfg.out = detail::parse_string(value, l);
    else if (key == "diagonal") cfg.diagonal = detail::parse_string(value, l);
    else if (key == "mu") cfg.mu = detail::parse_double(value, l);
    else if (key == "epsilon") cfg.epsilon = detail::parse_double(value, l);
    else if (key == "k0") cfg.k0 = detail::parse_double(value, l);
    else if (key == "k1") cfg.k1 = detail::parse_double(value, l);
    else if (key == "E") cfg.E = detail::parse_pair(value, l);
    else if (key == "alpha") cfg.alpha = detail::parse_double(value, l);
    else if (key == "beta") cfg.beta = detail::parse_double(value, l);
    else if (key == "K_upper") cfg.K_upper = detail::parse_double(value, l);
    else if (key == "K_lower") cfg.K_lower = detail::parse_double(value, l);
    else if (key == "C_p") cfg.C_p = detail::parse_double(value, l);
    else if (key == "C_sob") cfg.C_sob = detail::parse_double(value, l);
    else if (key == "quadrature_degree") cfg.quadrature_degree = detail::parse_int(value, l);
    else throw detail::LineError(line_no, "unknown key '" + key + "'");
  }
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    // messages start with the offending key
    const std::string msg = e.what();
    const auto it = seen.find(msg.substr(0, msg.find_first_of(" ,:")));
    if (it != seen.end()) throw detail::LineError(it->second, msg);
    throw;
  }
  return cfg;
}

inline RunConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_config_text(buf.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

/// Serialises every key; parse_config_text(write_config(c)) == c.
inline std::string write_config(const RunConfig& c) {
  std::ostringstream os;
  const auto str = [](const std::string& s) { return "\"" + s + "\""; };
  using detail::format_double;
  os << "command = " << str(c.command) << '\n'
     << "degree = " << c.degree << '\n'
     << "levels = " << c.levels << '\n'
     << "n = " << c.n << '\n'
     << "tol = " << format_double(c.tol) << '\n'
     << "maxit = " << c.maxit << '\n'
     << "solver = " << str(c.solver) << '\n'
     << "problem = " << str(c.problem) << '\n'
     << "out = " << str(c.out) << '\n'
     << "diagonal = " << str(c.diagonal) << '\n'
     << "mu = " << format_double(c.mu) << '\n'
     << "epsilon = " << format_double(c.epsilon) << '\n'
     << "k0 = " << format_double(c.k0) << '\n'
     << "k1 = " << format_double(c.k1) << '\n'
     << "E = [" << format_double(c.E[0]) << ", " << format_double(c.E[1]) << "]\n"
     << "alpha = " << format_double(c.alpha) << '\n'
     << "beta = " << format_double(c.beta) << '\n';
  if (c.K_upper) os << "K_upper = " << format_double(*c.K_upper) << '\n';
  if (c.K_lower) os << "K_lower = " << format_double(*c.K_lower) << '\n';
  os << "C_p = " << format_double(c.C_p) << '\n'
     << "C_sob = " << format_double(c.C_sob) << '\n'
     << "quadrature_degree = " << c.quadrature_degree << '\n';
  return os.str();
}

}  // namespace spb
