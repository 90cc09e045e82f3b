#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "oumwoz/error.hpp"

namespace oumwoz {

using Timestamp = std::chrono::sys_time<std::chrono::milliseconds>;

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw Error(ErrorCode::IoError, "read failed for " + path.string());
  return ss.str();
}

/// Writes via a sibling temp file and rename so readers never see a partial file.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IoError, "rename failed for " + path.string() + ": " + ec.message());
}

/// One entry per non-empty line; lines starting with '#' are comments.
inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::vector<std::string> out;
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    auto last = line.find_last_not_of(" \t");
    out.push_back(line.substr(first, last - first + 1));
  }
  return out;
}

inline std::string format_iso8601(Timestamp ts) {
  auto secs = std::chrono::floor<std::chrono::seconds>(ts);
  auto millis = (ts - secs).count();
  std::time_t t = std::chrono::system_clock::to_time_t(secs);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[96];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1,
                tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(millis));
  return buf;
}

inline Timestamp parse_iso8601(const std::string& text) {
  int year = 0, mon = 0, day = 0, hour = 0, min = 0, sec = 0, millis = 0;
  char tail = 0;
  int n = std::sscanf(text.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d.%3d%c", &year, &mon, &day, &hour, &min, &sec,
                      &millis, &tail);
  if (n != 8 || tail != 'Z') {
    n = std::sscanf(text.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d%c", &year, &mon, &day, &hour, &min, &sec, &tail);
    if (n != 7 || tail != 'Z') throw Error(ErrorCode::MalformedInput, "bad timestamp '" + text + "'");
    millis = 0;
  }
  using namespace std::chrono;
  auto ymd = year_month_day{std::chrono::year{year}, month{static_cast<unsigned>(mon)},
                            std::chrono::day{static_cast<unsigned>(day)}};
  if (!ymd.ok()) throw Error(ErrorCode::MalformedInput, "bad date '" + text + "'");
  return sys_days{ymd} + hours{hour} + minutes{min} + seconds{sec} + milliseconds{millis};
}

inline std::uint64_t fnv1a64(std::string_view data, std::uint64_t hash = 0xcbf29ce484222325ULL) {
  for (unsigned char c : data) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << v;
  return ss.str();
}

}  // namespace oumwoz
