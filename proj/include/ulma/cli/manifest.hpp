#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ulma/cli/log.hpp"
#include "ulma/error.hpp"

namespace ulma::cli {

struct Event {
  double onset_s = 0.0;
  double offset_s = 0.0;
  std::vector<std::string> tags;
};

enum class Context { Positive, Negative, Neutral };

inline std::string_view context_name(Context c) {
  switch (c) {
    case Context::Positive: return "positive";
    case Context::Negative: return "negative";
    case Context::Neutral: return "neutral";
  }
  return "neutral";
}

/// One line of a JSON Lines dataset manifest.
struct ManifestEntry {
  std::string path;  // as written in the manifest
  std::optional<std::string> label;
  std::vector<Event> events;
  std::optional<Context> context;
  std::optional<std::string> prefer_over;
  std::size_t line = 0;
};

namespace detail {

inline Error malformed(std::size_t line, const std::string& why) {
  return Error(Errc::MalformedLine, "line " + std::to_string(line) + ": " + why);
}

inline ManifestEntry parse_entry(const nlohmann::json& j, std::size_t line, std::vector<std::string>* warnings) {
  if (!j.is_object()) throw malformed(line, "record is not an object");
  ManifestEntry e;
  e.line = line;
  if (!j.contains("path")) throw Error(Errc::MissingPath, "line " + std::to_string(line) + ": no \"path\" field");
  if (!j["path"].is_string() || j["path"].get<std::string>().empty()) throw malformed(line, "\"path\" must be a nonempty string");
  e.path = j["path"].get<std::string>();
  for (const auto& [key, value] : j.items()) {
    if (key == "path") continue;
    if (key == "label") {
      if (!value.is_string()) throw malformed(line, "\"label\" must be a string");
      e.label = value.get<std::string>();
    } else if (key == "context") {
      if (!value.is_string()) throw malformed(line, "\"context\" must be a string");
      const auto s = value.get<std::string>();
      if (s == "positive") e.context = Context::Positive;
      else if (s == "negative") e.context = Context::Negative;
      else if (s == "neutral") e.context = Context::Neutral;
      else throw malformed(line, "unknown context \"" + s + "\"");
    } else if (key == "prefer_over") {
      if (!value.is_string()) throw malformed(line, "\"prefer_over\" must be a string");
      e.prefer_over = value.get<std::string>();
    } else if (key == "events") {
      if (!value.is_array()) throw malformed(line, "\"events\" must be an array");
      for (const auto& ev : value) {
        if (!ev.is_object() || !ev.contains("onset_s") || !ev.contains("offset_s") || !ev["onset_s"].is_number() ||
            !ev["offset_s"].is_number())
          throw malformed(line, "event needs numeric onset_s and offset_s");
        Event out{ev["onset_s"].get<double>(), ev["offset_s"].get<double>(), {}};
        if (!(out.onset_s < out.offset_s)) throw malformed(line, "event onset_s must be below offset_s");
        if (ev.contains("tags")) {
          if (!ev["tags"].is_array()) throw malformed(line, "event tags must be an array");
          for (const auto& t : ev["tags"]) {
            if (!t.is_string()) throw malformed(line, "event tags must be strings");
            out.tags.push_back(t.get<std::string>());
          }
        }
        e.events.push_back(std::move(out));
      }
    } else {
      const std::string w = "line " + std::to_string(line) + ": ignoring unknown field \"" + key + "\"";
      if (warnings) warnings->push_back(w);
      info(w);
    }
  }
  return e;
}

}  // namespace detail

inline std::vector<ManifestEntry> parse_manifest_text(const std::string& text,
                                                      std::vector<std::string>* warnings = nullptr) {
  std::vector<ManifestEntry> out;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw detail::malformed(n, e.what());
    }
    out.push_back(detail::parse_entry(j, n, warnings));
  }
  return out;
}

inline std::vector<ManifestEntry> parse_manifest(const std::filesystem::path& path,
                                                 std::vector<std::string>* warnings = nullptr) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_manifest_text(ss.str(), warnings);
}

/// Manifest paths are relative to the manifest's own directory.
inline std::filesystem::path resolve(const std::filesystem::path& manifest, const std::string& entry_path) {
  const std::filesystem::path p(entry_path);
  return p.is_absolute() ? p : manifest.parent_path() / p;
}

}  // namespace ulma::cli
