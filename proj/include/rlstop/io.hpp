#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "rlstop/corpus.hpp"
#include "rlstop/error.hpp"

namespace rlstop::io {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
  f.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!f) throw std::runtime_error("failed writing '" + path.string() + "'");
}

/// Parses a run + qrels pair into topics (R = 0 topics excluded). Parse
/// errors are prefixed with the offending file name.
inline corpus::AssembledTopics load_topics(const std::filesystem::path& run, const std::filesystem::path& qrels) {
  auto parse = [](const std::filesystem::path& path, auto&& fn) {
    const auto text = read_file(path);
    try {
      return fn(text);
    } catch (const ParseError& e) {
      throw ParseError(path.string() + ": " + e.what());
    }
  };
  auto rankings = parse(run, [](const std::string& t) { return corpus::parse_run(t); });
  auto judgements = parse(qrels, [](const std::string& t) { return corpus::parse_qrels(t); });
  return corpus::assemble_topics(rankings, judgements);
}

}  // namespace rlstop::io
