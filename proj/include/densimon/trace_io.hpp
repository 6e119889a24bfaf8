#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "config.hpp"
#include "dataplane.hpp"

namespace densimon {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kTraceHeader =
    "ts_ns,src_ip,dst_ip,proto,sport,dport,size,fin";

inline std::string format_trace_csv(const std::vector<Packet>& packets) {
  std::ostringstream os;
  os << kTraceHeader << '\n';
  for (const Packet& p : packets) {
    os << p.ts_ns << ',' << cfglang::render_ipv4(p.src_ip) << ','
       << cfglang::render_ipv4(p.dst_ip) << ',' << static_cast<unsigned>(p.proto)
       << ',' << p.sport << ',' << p.dport << ',' << p.size << ','
       << (p.tcp_fin ? 1 : 0) << '\n';
  }
  return os.str();
}

inline void write_trace_csv(const std::string& path, const std::vector<Packet>& packets) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open trace file for writing: " + path);
  out << format_trace_csv(packets);
  if (!out) throw IoError("failed writing trace file: " + path);
}

inline std::vector<Packet> parse_trace_csv(std::istream& in, const std::string& name) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty trace file: " + name);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kTraceHeader)
    throw IoError("bad trace header in " + name + ": expected '" +
                  std::string(kTraceHeader) + "'");

  auto parse_ip = [](const std::string& s, int lineno, const std::string& file) {
    unsigned a, b, c, d;
    char extra;
    if (std::sscanf(s.c_str(), "%u.%u.%u.%u%c", &a, &b, &c, &d, &extra) != 4 ||
        a > 255 || b > 255 || c > 255 || d > 255)
      throw IoError(file + ":" + std::to_string(lineno) + ": bad address '" + s + "'");
    return (a << 24) | (b << 16) | (c << 8) | d;
  };

  std::vector<Packet> out;
  std::uint64_t prev_ts = 0;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 8)
      throw IoError(name + ":" + std::to_string(lineno) + ": expected 8 fields");
    try {
      Packet p;
      p.ts_ns = std::stoull(fields[0]);
      p.src_ip = parse_ip(fields[1], lineno, name);
      p.dst_ip = parse_ip(fields[2], lineno, name);
      p.proto = static_cast<std::uint8_t>(std::stoul(fields[3]));
      p.sport = static_cast<std::uint16_t>(std::stoul(fields[4]));
      p.dport = static_cast<std::uint16_t>(std::stoul(fields[5]));
      p.size = static_cast<std::uint32_t>(std::stoul(fields[6]));
      p.tcp_fin = fields[7] == "1";
      if (p.ts_ns < prev_ts)
        throw IoError(name + ":" + std::to_string(lineno) +
                      ": timestamps must be non-decreasing");
      prev_ts = p.ts_ns;
      out.push_back(p);
    } catch (const IoError&) {
      throw;
    } catch (...) {
      throw IoError(name + ":" + std::to_string(lineno) + ": malformed record");
    }
  }
  return out;
}

inline std::vector<Packet> read_trace_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open trace file: " + path);
  return parse_trace_csv(in, path);
}

}  // namespace densimon
