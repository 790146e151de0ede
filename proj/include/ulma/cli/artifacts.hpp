#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ulma/error.hpp"
#include "ulma/model/encoder.hpp"
#include "ulma/model/heads.hpp"
#include "ulma/units.hpp"

// Versioned on-disk artifacts. Every file carries "version": kArtifactVersion (JSON) or a
// "# ulma-kit v1" first line (CSV); loaders reject anything else.

namespace ulma::cli {

using nlohmann::json;

inline constexpr int kArtifactVersion = 1;
inline constexpr const char* kCsvHeader = "# ulma-kit v1";

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  out << text;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline json read_json(const std::filesystem::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw Error(Errc::CorruptHeader, path.string() + ": " + e.what());
  }
}

/// First line of a JSON Lines artifact.
inline std::string header_line(std::string_view kind) {
  nlohmann::ordered_json h;
  h["version"] = kArtifactVersion;
  h["kind"] = kind;
  return h.dump() + "\n";
}

inline void write_json(const std::filesystem::path& path, const json& j) { write_text(path, j.dump() + "\n"); }

inline void check_version(const json& j, std::string_view kind, const std::string& what) {
  if (!j.is_object() || !j.contains("version") || !j["version"].is_number_integer() ||
      j["version"].get<int>() != kArtifactVersion)
    throw Error(Errc::VersionMismatch, what + ": expected version " + std::to_string(kArtifactVersion));
  if (!kind.empty() && j.value("kind", std::string()) != kind)
    throw Error(Errc::InvalidArgument, what + ": expected a " + std::string(kind) + " artifact");
}

// ---------------------------------------------------------------------------
// Codebook

inline json codebook_to_json(const units::Codebook& cb) {
  json j;
  j["version"] = kArtifactVersion;
  j["kind"] = "codebook";
  j["stage"] = cb.stage;
  j["k"] = cb.k();
  j["dim"] = cb.dim();
  j["seed"] = cb.seed;
  if (cb.stage == 2) j["layer"] = cb.layer;
  j["centroids"] = cb.centroids.data();
  return j;
}

inline units::Codebook codebook_from_json(const json& j) {
  check_version(j, "codebook", "codebook");
  units::Codebook cb;
  cb.stage = j.at("stage").get<int>();
  cb.seed = j.at("seed").get<std::uint64_t>();
  cb.layer = j.value("layer", -1);
  const auto k = j.at("k").get<std::size_t>();
  const auto dim = j.at("dim").get<std::size_t>();
  auto data = j.at("centroids").get<std::vector<double>>();
  if (data.size() != k * dim) throw Error(Errc::ShapeMismatch, "codebook centroid count disagrees with k·dim");
  cb.centroids = Matrix(k, dim);
  cb.centroids.data() = std::move(data);
  return cb;
}

inline void save_codebook(const std::filesystem::path& path, const units::Codebook& cb) {
  write_json(path, codebook_to_json(cb));
}
inline units::Codebook load_codebook(const std::filesystem::path& path) { return codebook_from_json(read_json(path)); }

// ---------------------------------------------------------------------------
// Encoder checkpoints

inline json config_to_json(const model::EncoderConfig& c) {
  json layers = json::array();
  for (const auto& l : c.conv_layers) layers.push_back({l.kernel, l.stride, l.channels});
  return {{"sample_rate", c.sample_rate},   {"conv_layers", layers},       {"d_model", c.d_model},
          {"n_layers", c.n_layers},         {"n_heads", c.n_heads},        {"d_ff", c.d_ff},
          {"k_units", c.k_units},           {"proj_dim", c.proj_dim},      {"temperature", c.temperature},
          {"mask_span", c.mask_span},       {"mask_start_prob", c.mask_start_prob}, {"max_pos", c.max_pos}};
}

inline model::EncoderConfig config_from_json(const json& j) {
  model::EncoderConfig c;
  c.sample_rate = j.at("sample_rate").get<int>();
  c.conv_layers.clear();
  for (const auto& l : j.at("conv_layers"))
    c.conv_layers.push_back({l.at(0).get<std::size_t>(), l.at(1).get<std::size_t>(), l.at(2).get<std::size_t>()});
  c.d_model = j.at("d_model").get<std::size_t>();
  c.n_layers = j.at("n_layers").get<std::size_t>();
  c.n_heads = j.at("n_heads").get<std::size_t>();
  c.d_ff = j.at("d_ff").get<std::size_t>();
  c.k_units = j.at("k_units").get<std::size_t>();
  c.proj_dim = j.at("proj_dim").get<std::size_t>();
  c.temperature = j.at("temperature").get<double>();
  c.mask_span = j.at("mask_span").get<std::size_t>();
  c.mask_start_prob = j.at("mask_start_prob").get<double>();
  c.max_pos = j.at("max_pos").get<std::size_t>();
  return c;
}

inline json params_to_json(const model::ParamList& params) {
  json arr = json::array();
  for (const model::Param* p : params)
    arr.push_back({{"name", p->name}, {"shape", {p->value.rows(), p->value.cols()}}, {"data", p->value.data()}});
  return arr;
}

inline void params_from_json(const json& arr, const model::ParamList& params) {
  std::map<std::string, const json*> by_name;
  for (const auto& p : arr) by_name[p.at("name").get<std::string>()] = &p;
  for (model::Param* p : params) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) throw Error(Errc::ShapeMismatch, "checkpoint lacks parameter " + p->name);
    const json& pj = *it->second;
    const auto rows = pj.at("shape").at(0).get<std::size_t>();
    const auto cols = pj.at("shape").at(1).get<std::size_t>();
    if (rows != p->value.rows() || cols != p->value.cols())
      throw Error(Errc::ShapeMismatch, "parameter " + p->name + " has a different shape");
    auto data = pj.at("data").get<std::vector<double>>();
    if (data.size() != rows * cols) throw Error(Errc::ShapeMismatch, "parameter " + p->name + " data size");
    p->value.data() = std::move(data);
    p->grad = Matrix(rows, cols);
  }
}

struct HeadBundle {
  model::FineTuneHead head;
  std::vector<std::string> classes;
};

/// Encoder parameters plus whatever heads have been trained on top of it.
struct Checkpoint {
  model::EncoderModel encoder;
  std::optional<HeadBundle> classify;
  std::optional<HeadBundle> detect;
  std::optional<model::Linear> reward_head;
};

inline json head_to_json(HeadBundle& h) {
  return {{"classes", h.classes}, {"params", params_to_json(h.head.params())}};
}

inline HeadBundle head_from_json(const json& j, model::HeadKind kind, std::size_t d_model) {
  HeadBundle h;
  h.classes = j.at("classes").get<std::vector<std::string>>();
  h.head = model::FineTuneHead(kind, d_model, h.classes.size());
  params_from_json(j.at("params"), h.head.params());
  return h;
}

inline json checkpoint_to_json(Checkpoint& ck) {
  json j;
  j["version"] = kArtifactVersion;
  j["kind"] = "checkpoint";
  j["config"] = config_to_json(ck.encoder.config);
  j["seed"] = ck.encoder.seed;
  j["params"] = params_to_json(ck.encoder.all_params());
  json heads = json::object();
  if (ck.classify) heads["classify"] = head_to_json(*ck.classify);
  if (ck.detect) heads["detect"] = head_to_json(*ck.detect);
  if (ck.reward_head) {
    model::ParamList p;
    ck.reward_head->collect(p);
    heads["reward"] = {{"params", params_to_json(p)}};
  }
  j["heads"] = heads;
  return j;
}

inline Checkpoint checkpoint_from_json(const json& j) {
  check_version(j, "checkpoint", "checkpoint");
  Checkpoint ck;
  ck.encoder = model::EncoderModel(config_from_json(j.at("config")), j.at("seed").get<std::uint64_t>());
  params_from_json(j.at("params"), ck.encoder.all_params());
  const std::size_t d = ck.encoder.config.d_model;
  const json& heads = j.at("heads");
  if (heads.contains("classify")) ck.classify = head_from_json(heads["classify"], model::HeadKind::Classify, d);
  if (heads.contains("detect")) ck.detect = head_from_json(heads["detect"], model::HeadKind::Detect, d);
  if (heads.contains("reward")) {
    model::Linear lin("reward_head", d, 1);
    model::ParamList p;
    lin.collect(p);
    params_from_json(heads["reward"].at("params"), p);
    ck.reward_head = std::move(lin);
  }
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, Checkpoint& ck) {
  write_json(path, checkpoint_to_json(ck));
}
inline Checkpoint load_checkpoint(const std::filesystem::path& path) { return checkpoint_from_json(read_json(path)); }

// ---------------------------------------------------------------------------
// CSV

/// Writes a versioned CSV: header comment, column names, rows.
inline std::string csv_text(std::string_view kind, const std::vector<std::string>& columns,
                            const std::vector<std::vector<std::string>>& rows) {
  std::string out = std::string(kCsvHeader) + " " + std::string(kind) + "\n";
  for (std::size_t i = 0; i < columns.size(); ++i) out += (i ? "," : "") + columns[i];
  out += "\n";
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + r[i];
    out += "\n";
  }
  return out;
}

/// Shortest round-trip decimal form of a double.
inline std::string num(double v) { return json(v).dump(); }

inline void check_csv_version(const std::string& text, const std::string& what) {
  if (text.rfind(kCsvHeader, 0) != 0) throw Error(Errc::VersionMismatch, what + ": missing \"" + kCsvHeader + "\" header");
}

}  // namespace ulma::cli
