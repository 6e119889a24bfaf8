#pragma once

#include <cmath>
#include <cstdio>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "controller.hpp"
#include "dataplane.hpp"
#include "traffic.hpp"

namespace densimon {

struct ConfigError : std::runtime_error {
  int line, column;
  ConfigError(int l, int c, const std::string& msg)
      : std::runtime_error("config error at " + std::to_string(l) + ":" +
                           std::to_string(c) + ": " + msg),
        line(l),
        column(c) {}
};

// One conjunct of a five-tuple constraint, kept in source form so configs can
// be rendered back out.
struct ConstraintAtom {
  enum class Field : std::uint8_t { Src, Dst, Proto, Sport, Dport } field;
  enum class Kind : std::uint8_t { Prefix, Exact, Range, Less } kind;
  std::uint64_t a = 0;  // prefix address / exact value / range low
  std::uint64_t b = 0;  // prefix length / range high / less-than bound

  bool operator==(const ConstraintAtom&) const = default;
};

struct Constraint {
  std::vector<ConstraintAtom> atoms;
  bool operator==(const Constraint&) const = default;
};

struct TaskDecl {
  std::uint32_t id = 0;
  std::string location;
  Constraint constraint;
  Feature feature = Feature::PacketSize;
  std::optional<double> target_accuracy;

  bool operator==(const TaskDecl&) const = default;
};

struct RunConfig {
  std::vector<TaskDecl> tasks;
  Objective objective;
  double step_length_s = 1.0;
  int subsamples = 6;
  std::uint64_t flowlet_timeout_ns = 500'000'000;
  std::uint64_t seed = 1;
  std::uint64_t steps = 10;
  std::uint64_t min_rate = 64;
  std::uint64_t max_rate = 65536;
  double default_target = 0.98;
  std::string output_path = "results";
  std::string trace_file;                 // one of trace_file / trace_spec is set
  std::optional<TraceSpec> trace_spec;
};

namespace cfglang {

struct Token {
  std::string text;
  int line = 0, column = 0;
  bool punct = false;
};

inline std::vector<Token> lex(const std::string& text) {
  std::vector<Token> out;
  int line = 1, col = 1;
  std::string word;
  int wline = 1, wcol = 1;
  auto flush = [&]() {
    if (!word.empty()) {
      out.push_back({word, wline, wcol, false});
      word.clear();
    }
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (c == '#') {
      flush();
      while (i < text.size() && text[i] != '\n') ++i;
      --i;
      continue;
    }
    if (c == '\n') {
      flush();
      ++line;
      col = 1;
      continue;
    }
    if (c == ' ' || c == '\t' || c == '\r') {
      flush();
      ++col;
      continue;
    }
    if (c == '{' || c == '}' || c == '(' || c == ')' || c == '&' || c == '@') {
      flush();
      out.push_back({std::string(1, c), line, col, true});
      ++col;
      continue;
    }
    if (word.empty()) {
      wline = line;
      wcol = col;
    }
    word.push_back(c);
    ++col;
  }
  flush();
  return out;
}

class Parser {
 public:
  explicit Parser(const std::string& text) : tokens_(lex(text)) {}

  bool done() const { return pos_ >= tokens_.size(); }

  const Token& peek() const {
    if (done()) throw ConfigError(last_line(), last_col(), "unexpected end of input");
    return tokens_[pos_];
  }

  Token next() {
    Token t = peek();
    ++pos_;
    return t;
  }

  bool accept(const std::string& text) {
    if (!done() && tokens_[pos_].text == text) {
      ++pos_;
      return true;
    }
    return false;
  }

  Token expect(const std::string& text) {
    if (done() || tokens_[pos_].text != text)
      throw ConfigError(done() ? last_line() : tokens_[pos_].line,
                        done() ? last_col() : tokens_[pos_].column,
                        "expected '" + text + "'");
    return next();
  }

  std::uint64_t parse_uint() {
    Token t = next();
    try {
      std::size_t used = 0;
      std::uint64_t v = std::stoull(t.text, &used);
      if (used != t.text.size()) throw std::invalid_argument("");
      return v;
    } catch (...) {
      throw ConfigError(t.line, t.column, "expected integer, got '" + t.text + "'");
    }
  }

  double parse_real() {
    Token t = next();
    try {
      std::size_t used = 0;
      double v = std::stod(t.text, &used);
      if (used != t.text.size()) throw std::invalid_argument("");
      return v;
    } catch (...) {
      throw ConfigError(t.line, t.column, "expected number, got '" + t.text + "'");
    }
  }

  // duration with unit suffix (ns/us/ms/s); a bare number means seconds
  double parse_duration_s() {
    Token t = next();
    double scale = 1.0;
    std::string num = t.text;
    auto ends_with = [&](const std::string& suf) {
      return num.size() > suf.size() &&
             num.compare(num.size() - suf.size(), suf.size(), suf) == 0;
    };
    if (ends_with("ns")) {
      scale = 1e-9;
      num.resize(num.size() - 2);
    } else if (ends_with("us")) {
      scale = 1e-6;
      num.resize(num.size() - 2);
    } else if (ends_with("ms")) {
      scale = 1e-3;
      num.resize(num.size() - 2);
    } else if (ends_with("s")) {
      num.resize(num.size() - 1);
    }
    try {
      std::size_t used = 0;
      double v = std::stod(num, &used);
      if (used != num.size() || v < 0.0) throw std::invalid_argument("");
      return v * scale;
    } catch (...) {
      throw ConfigError(t.line, t.column, "expected duration, got '" + t.text + "'");
    }
  }

  int last_line() const { return tokens_.empty() ? 1 : tokens_.back().line; }
  int last_col() const { return tokens_.empty() ? 1 : tokens_.back().column; }

 private:
  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
};

inline std::uint32_t parse_ipv4(const Token& t, const std::string& text) {
  unsigned a, b, c, d;
  char extra;
  if (std::sscanf(text.c_str(), "%u.%u.%u.%u%c", &a, &b, &c, &d, &extra) != 4 ||
      a > 255 || b > 255 || c > 255 || d > 255)
    throw ConfigError(t.line, t.column, "malformed IPv4 address '" + text + "'");
  return (a << 24) | (b << 16) | (c << 8) | d;
}

inline std::string render_ipv4(std::uint32_t ip) {
  std::ostringstream os;
  os << ((ip >> 24) & 255) << '.' << ((ip >> 16) & 255) << '.' << ((ip >> 8) & 255)
     << '.' << (ip & 255);
  return os.str();
}

}  // namespace cfglang

inline Feature parse_feature_name(const std::string& name, int line, int col) {
  if (name == "packet_size") return Feature::PacketSize;
  if (name == "inter_arrival_time") return Feature::InterArrivalTime;
  if (name == "flowlet_packets") return Feature::FlowletPackets;
  if (name == "flowlet_bytes" || name == "burst_size") return Feature::FlowletBytes;
  if (name == "flowlet_duration" || name == "burst_duration")
    return Feature::FlowletDuration;
  if (name == "queue_time")
    throw ConfigError(line, col,
                      "feature 'queue_time' requires an emulated queueing "
                      "discipline and is not supported");
  throw ConfigError(line, col, "unknown feature '" + name + "'");
}

inline std::string feature_name(Feature f) {
  switch (f) {
    case Feature::PacketSize: return "packet_size";
    case Feature::InterArrivalTime: return "inter_arrival_time";
    case Feature::FlowletPackets: return "flowlet_packets";
    case Feature::FlowletBytes: return "flowlet_bytes";
    case Feature::FlowletDuration: return "flowlet_duration";
  }
  return "?";
}

namespace cfglang {

inline ConstraintAtom parse_constraint_atom(Parser& p) {
  Token field = p.next();
  ConstraintAtom atom;
  if (field.text == "src")
    atom.field = ConstraintAtom::Field::Src;
  else if (field.text == "dst")
    atom.field = ConstraintAtom::Field::Dst;
  else if (field.text == "proto")
    atom.field = ConstraintAtom::Field::Proto;
  else if (field.text == "sport")
    atom.field = ConstraintAtom::Field::Sport;
  else if (field.text == "dport")
    atom.field = ConstraintAtom::Field::Dport;
  else
    throw ConfigError(field.line, field.column,
                      "unknown constraint field '" + field.text + "'");
  p.expect("(");
  Token value = p.next();
  const std::string& v = value.text;
  switch (atom.field) {
    case ConstraintAtom::Field::Src:
    case ConstraintAtom::Field::Dst: {
      std::string addr = v;
      std::uint64_t len = 32;
      if (auto slash = v.find('/'); slash != std::string::npos) {
        addr = v.substr(0, slash);
        try {
          len = std::stoull(v.substr(slash + 1));
        } catch (...) {
          len = 99;
        }
        if (len > 32)
          throw ConfigError(value.line, value.column,
                            "malformed prefix length in '" + v + "'");
      }
      atom.kind = ConstraintAtom::Kind::Prefix;
      atom.a = parse_ipv4(value, addr);
      atom.b = len;
      break;
    }
    case ConstraintAtom::Field::Proto: {
      atom.kind = ConstraintAtom::Kind::Exact;
      if (v == "TCP")
        atom.a = 6;
      else if (v == "UDP")
        atom.a = 17;
      else if (v == "ICMP")
        atom.a = 1;
      else {
        try {
          atom.a = std::stoull(v);
        } catch (...) {
          throw ConfigError(value.line, value.column, "unknown protocol '" + v + "'");
        }
        if (atom.a > 255)
          throw ConfigError(value.line, value.column, "protocol out of range");
      }
      break;
    }
    case ConstraintAtom::Field::Sport:
    case ConstraintAtom::Field::Dport: {
      try {
        if (v.front() == '<') {
          atom.kind = ConstraintAtom::Kind::Less;
          atom.b = std::stoull(v.substr(1));
          if (atom.b == 0 || atom.b > 65536) throw std::invalid_argument("");
        } else if (auto dash = v.find('-'); dash != std::string::npos) {
          atom.kind = ConstraintAtom::Kind::Range;
          atom.a = std::stoull(v.substr(0, dash));
          atom.b = std::stoull(v.substr(dash + 1));
          if (atom.a > atom.b || atom.b > 65535) throw std::invalid_argument("");
        } else {
          atom.kind = ConstraintAtom::Kind::Exact;
          atom.a = std::stoull(v);
          if (atom.a > 65535) throw std::invalid_argument("");
        }
      } catch (const ConfigError&) {
        throw;
      } catch (...) {
        throw ConfigError(value.line, value.column, "malformed port constraint '" + v + "'");
      }
      break;
    }
  }
  p.expect(")");
  return atom;
}

inline GroundTruthSpec parse_distribution(Parser& p, Feature feature) {
  GroundTruthSpec spec;
  spec.feature = feature;
  p.expect("{");
  while (!p.accept("}")) {
    Token t = p.next();
    if (t.text == "support") {
      spec.lo = p.parse_real();
      spec.hi = p.parse_real();
    } else if (t.text == "lognormal" || t.text == "truncnormal" ||
               t.text == "exponential" || t.text == "spike") {
      MixtureComponent c;
      if (t.text == "lognormal") {
        c.family = DistFamily::Lognormal;
        c.a = p.parse_real();
        c.b = p.parse_real();
      } else if (t.text == "truncnormal") {
        c.family = DistFamily::TruncNormal;
        c.a = p.parse_real();
        c.b = p.parse_real();
      } else if (t.text == "spike") {
        c.family = DistFamily::Spike;
        c.a = p.parse_real();
        c.b = p.parse_real();
      } else {
        c.family = DistFamily::Exponential;
        c.a = p.parse_real();
      }
      p.expect("weight");
      c.weight = p.parse_real();
      spec.components.push_back(c);
    } else {
      throw ConfigError(t.line, t.column, "unknown distribution entry '" + t.text + "'");
    }
  }
  try {
    spec.validate();
  } catch (const std::exception& e) {
    throw ConfigError(p.last_line(), p.last_col(), e.what());
  }
  return spec;
}

inline StreamSpec parse_stream(Parser& p) {
  StreamSpec s;
  Token name = p.next();
  s.name = name.text;
  p.expect("{");
  while (!p.accept("}")) {
    Token t = p.next();
    if (t.text == "src") {
      Token v = p.next();
      std::string addr = v.text;
      if (auto slash = v.text.find('/'); slash != std::string::npos) {
        addr = v.text.substr(0, slash);
        s.src_prefix_len = std::stoi(v.text.substr(slash + 1));
      } else {
        s.src_prefix_len = 32;
      }
      s.src_prefix = parse_ipv4(v, addr);
    } else if (t.text == "dst") {
      s.dst_ip = parse_ipv4(p.peek(), p.next().text);
    } else if (t.text == "proto") {
      Token v = p.next();
      s.proto = v.text == "TCP" ? 6 : v.text == "UDP" ? 17 : static_cast<std::uint8_t>(std::stoul(v.text));
    } else if (t.text == "flows") {
      s.flows = p.parse_uint();
    } else {
      Feature f = parse_feature_name(t.text, t.line, t.column);
      s.feature_specs.push_back(parse_distribution(p, f));
    }
  }
  return s;
}

inline TraceSpec parse_trace_block(Parser& p) {
  TraceSpec spec;
  p.expect("{");
  while (!p.accept("}")) {
    Token t = p.next();
    if (t.text == "duration")
      spec.duration_s = p.parse_duration_s();
    else if (t.text == "flowlet_gap")
      spec.flowlet_gap_ns = static_cast<std::uint64_t>(p.parse_duration_s() * 1e9);
    else if (t.text == "stream")
      spec.streams.push_back(parse_stream(p));
    else
      throw ConfigError(t.line, t.column, "unknown trace entry '" + t.text + "'");
  }
  return spec;
}

}  // namespace cfglang

// Parses the declarative run configuration: global settings, an optional
// inline trace spec, and per-location constraint blocks listing features.
inline RunConfig parse_config(const std::string& text) {
  using cfglang::Parser;
  using cfglang::Token;
  Parser p(text);
  RunConfig cfg;
  bool saw_tasks = false;
  std::uint32_t next_id = 1;

  while (!p.done()) {
    Token t = p.next();
    const std::string& k = t.text;
    if (k == "seed")
      cfg.seed = p.parse_uint();
    else if (k == "steps")
      cfg.steps = p.parse_uint();
    else if (k == "step_length")
      cfg.step_length_s = p.parse_duration_s();
    else if (k == "subsamples")
      cfg.subsamples = static_cast<int>(p.parse_uint());
    else if (k == "flowlet_timeout")
      cfg.flowlet_timeout_ns = static_cast<std::uint64_t>(p.parse_duration_s() * 1e9);
    else if (k == "min_rate")
      cfg.min_rate = p.parse_uint();
    else if (k == "max_rate")
      cfg.max_rate = p.parse_uint();
    else if (k == "target")
      cfg.default_target = p.parse_real();
    else if (k == "output")
      cfg.output_path = p.next().text;
    else if (k == "objective") {
      Token o = p.next();
      if (o.text == "minimize") {
        cfg.objective.kind = ObjectiveKind::MinimizeResources;
      } else if (o.text == "maximize") {
        cfg.objective.kind = ObjectiveKind::MaximizeAccuracy;
        p.expect("budget");
        cfg.objective.budget = p.parse_uint();
      } else {
        throw ConfigError(o.line, o.column, "objective must be minimize or maximize");
      }
    } else if (k == "trace") {
      if (p.peek().text == "{") {
        cfg.trace_spec = cfglang::parse_trace_block(p);
      } else {
        p.expect("file");
        cfg.trace_file = p.next().text;
      }
    } else if (k == "tasks") {
      saw_tasks = true;
      p.expect("{");
      while (!p.accept("}")) {
        Token loc = p.next();
        p.expect("{");
        while (!p.accept("}")) {
          Constraint constraint;
          constraint.atoms.push_back(cfglang::parse_constraint_atom(p));
          while (p.accept("&"))
            constraint.atoms.push_back(cfglang::parse_constraint_atom(p));
          p.expect("{");
          while (!p.accept("}")) {
            Token fname = p.next();
            TaskDecl task;
            task.id = next_id++;
            task.location = loc.text;
            task.constraint = constraint;
            task.feature = parse_feature_name(fname.text, fname.line, fname.column);
            if (p.accept("@")) {
              double target = p.parse_real();
              if (!(target > 0.0 && target < 1.0))
                throw ConfigError(fname.line, fname.column,
                                  "accuracy target must be in (0, 1)");
              task.target_accuracy = target;
            }
            cfg.tasks.push_back(std::move(task));
          }
        }
      }
    } else {
      throw ConfigError(t.line, t.column, "unknown setting '" + k + "'");
    }
  }

  if (!saw_tasks || cfg.tasks.empty())
    throw ConfigError(p.last_line(), p.last_col(), "no tasks defined");
  if (cfg.trace_file.empty() && !cfg.trace_spec)
    throw ConfigError(p.last_line(), p.last_col(), "no trace source defined");
  if (cfg.objective.kind == ObjectiveKind::MaximizeAccuracy) {
    for (const TaskDecl& t : cfg.tasks)
      if (t.target_accuracy)
        throw ConfigError(p.last_line(), p.last_col(),
                          "per-task accuracy targets require the minimize objective");
    if (cfg.objective.budget < cfg.min_rate * cfg.tasks.size())
      throw ConfigError(p.last_line(), p.last_col(),
                        "budget below the per-task minimum rate");
  }
  if (!(cfg.default_target > 0.0 && cfg.default_target < 1.0))
    throw ConfigError(p.last_line(), p.last_col(), "target must be in (0, 1)");
  if (cfg.subsamples < 1)
    throw ConfigError(p.last_line(), p.last_col(), "subsamples must be >= 1");
  return cfg;
}

namespace cfglang {

inline std::string render_atom(const ConstraintAtom& a) {
  std::ostringstream os;
  switch (a.field) {
    case ConstraintAtom::Field::Src: os << "src"; break;
    case ConstraintAtom::Field::Dst: os << "dst"; break;
    case ConstraintAtom::Field::Proto: os << "proto"; break;
    case ConstraintAtom::Field::Sport: os << "sport"; break;
    case ConstraintAtom::Field::Dport: os << "dport"; break;
  }
  os << '(';
  switch (a.kind) {
    case ConstraintAtom::Kind::Prefix:
      os << render_ipv4(static_cast<std::uint32_t>(a.a)) << '/' << a.b;
      break;
    case ConstraintAtom::Kind::Exact:
      os << a.a;
      break;
    case ConstraintAtom::Kind::Range:
      os << a.a << '-' << a.b;
      break;
    case ConstraintAtom::Kind::Less:
      os << '<' << a.b;
      break;
  }
  os << ')';
  return os.str();
}

inline void render_real(std::ostringstream& os, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  os << buf;
}

inline void render_distribution(std::ostringstream& os, const GroundTruthSpec& d,
                                const std::string& indent) {
  os << indent << feature_name(d.feature) << " {\n";
  os << indent << "  support ";
  render_real(os, d.lo);
  os << ' ';
  render_real(os, d.hi);
  os << '\n';
  for (const MixtureComponent& c : d.components) {
    os << indent << "  ";
    switch (c.family) {
      case DistFamily::Lognormal: os << "lognormal "; break;
      case DistFamily::TruncNormal: os << "truncnormal "; break;
      case DistFamily::Exponential: os << "exponential "; break;
      case DistFamily::Spike: os << "spike "; break;
    }
    render_real(os, c.a);
    if (c.family != DistFamily::Exponential) {
      os << ' ';
      render_real(os, c.b);
    }
    os << " weight ";
    render_real(os, c.weight);
    os << '\n';
  }
  os << indent << "}\n";
}

}  // namespace cfglang

// Canonical text form; parse_config(render_config(cfg)) reproduces cfg.
inline std::string render_config(const RunConfig& cfg) {
  std::ostringstream os;
  os << "seed " << cfg.seed << "\n";
  os << "steps " << cfg.steps << "\n";
  os << "step_length ";
  cfglang::render_real(os, cfg.step_length_s);
  os << "s\n";
  os << "subsamples " << cfg.subsamples << "\n";
  os << "flowlet_timeout " << cfg.flowlet_timeout_ns << "ns\n";
  os << "min_rate " << cfg.min_rate << "\n";
  os << "max_rate " << cfg.max_rate << "\n";
  os << "target ";
  cfglang::render_real(os, cfg.default_target);
  os << "\n";
  if (cfg.objective.kind == ObjectiveKind::MinimizeResources)
    os << "objective minimize\n";
  else
    os << "objective maximize budget " << cfg.objective.budget << "\n";
  os << "output " << cfg.output_path << "\n";
  if (!cfg.trace_file.empty()) {
    os << "trace file " << cfg.trace_file << "\n";
  } else if (cfg.trace_spec) {
    const TraceSpec& t = *cfg.trace_spec;
    os << "trace {\n  duration ";
    cfglang::render_real(os, t.duration_s);
    os << "s\n  flowlet_gap " << t.flowlet_gap_ns << "ns\n";
    for (const StreamSpec& s : t.streams) {
      os << "  stream " << s.name << " {\n";
      os << "    src " << cfglang::render_ipv4(s.src_prefix) << '/' << s.src_prefix_len
         << "\n";
      os << "    dst " << cfglang::render_ipv4(s.dst_ip) << "\n";
      os << "    proto " << static_cast<unsigned>(s.proto) << "\n";
      os << "    flows " << s.flows << "\n";
      for (const GroundTruthSpec& d : s.feature_specs)
        cfglang::render_distribution(os, d, "    ");
      os << "  }\n";
    }
    os << "}\n";
  }
  os << "tasks {\n";
  // preserve document order while grouping by location and constraint
  for (std::size_t i = 0; i < cfg.tasks.size();) {
    const std::string& loc = cfg.tasks[i].location;
    os << "  " << loc << " {\n";
    std::size_t j = i;
    while (j < cfg.tasks.size() && cfg.tasks[j].location == loc) {
      const Constraint& cons = cfg.tasks[j].constraint;
      os << "    ";
      for (std::size_t ai = 0; ai < cons.atoms.size(); ++ai) {
        if (ai) os << " & ";
        os << cfglang::render_atom(cons.atoms[ai]);
      }
      os << " {\n";
      while (j < cfg.tasks.size() && cfg.tasks[j].location == loc &&
             cfg.tasks[j].constraint == cons) {
        os << "      " << feature_name(cfg.tasks[j].feature);
        if (cfg.tasks[j].target_accuracy) {
          os << " @ ";
          cfglang::render_real(os, *cfg.tasks[j].target_accuracy);
        }
        os << "\n";
        ++j;
      }
      os << "    }\n";
    }
    os << "  }\n";
    i = j;
  }
  os << "}\n";
  return os.str();
}

// Standalone trace spec document (for the generate subcommand): either a bare
// `trace { ... }` block or a whole run config with one.
inline TraceSpec parse_trace_spec(const std::string& text) {
  cfglang::Parser p(text);
  while (!p.done()) {
    cfglang::Token t = p.next();
    if (t.text == "trace" && !p.done() && p.peek().text == "{")
      return cfglang::parse_trace_block(p);
  }
  throw ConfigError(1, 1, "no trace block found");
}

// Compiles a task's constraint to ternary rules. Range constraints expand to
// minimal prefix covers; conjunctions take the cartesian product of the
// per-field expansions.
inline std::vector<TernaryRule> compile_rules(const std::vector<TaskDecl>& tasks) {
  std::vector<TernaryRule> out;
  for (const TaskDecl& task : tasks) {
    std::vector<TernaryRule> partial{TernaryRule{}};
    partial.front().task_ids = {task.id};
    for (const ConstraintAtom& atom : task.constraint.atoms) {
      std::vector<std::pair<std::uint16_t, std::uint16_t>> port_vm;
      switch (atom.kind) {
        case ConstraintAtom::Kind::Prefix:
        case ConstraintAtom::Kind::Exact:
          break;
        case ConstraintAtom::Kind::Range:
          port_vm = range_to_prefixes(static_cast<std::uint32_t>(atom.a),
                                      static_cast<std::uint32_t>(atom.b));
          break;
        case ConstraintAtom::Kind::Less:
          port_vm = range_to_prefixes(0, static_cast<std::uint32_t>(atom.b) - 1);
          break;
      }
      std::vector<TernaryRule> expanded;
      for (const TernaryRule& base : partial) {
        auto apply_one = [&](TernaryRule r, std::uint16_t v, std::uint16_t m) {
          if (atom.field == ConstraintAtom::Field::Sport) {
            r.sport_value = v;
            r.sport_mask = m;
          } else {
            r.dport_value = v;
            r.dport_mask = m;
          }
          expanded.push_back(std::move(r));
        };
        switch (atom.field) {
          case ConstraintAtom::Field::Src: {
            TernaryRule r = base;
            r.src_mask = atom.b == 0 ? 0 : ~0u << (32 - atom.b);
            r.src_value = static_cast<std::uint32_t>(atom.a) & r.src_mask;
            expanded.push_back(std::move(r));
            break;
          }
          case ConstraintAtom::Field::Dst: {
            TernaryRule r = base;
            r.dst_mask = atom.b == 0 ? 0 : ~0u << (32 - atom.b);
            r.dst_value = static_cast<std::uint32_t>(atom.a) & r.dst_mask;
            expanded.push_back(std::move(r));
            break;
          }
          case ConstraintAtom::Field::Proto: {
            TernaryRule r = base;
            r.proto_value = static_cast<std::uint8_t>(atom.a);
            r.proto_mask = 0xFF;
            expanded.push_back(std::move(r));
            break;
          }
          case ConstraintAtom::Field::Sport:
          case ConstraintAtom::Field::Dport: {
            if (atom.kind == ConstraintAtom::Kind::Exact) {
              apply_one(base, static_cast<std::uint16_t>(atom.a), 0xFFFF);
            } else {
              for (auto [v, m] : port_vm) apply_one(base, v, m);
            }
            break;
          }
        }
      }
      partial = std::move(expanded);
    }
    for (TernaryRule& r : partial) {
      r.priority = static_cast<int>(task.id);
      out.push_back(std::move(r));
    }
  }
  return out;
}

}  // namespace densimon
