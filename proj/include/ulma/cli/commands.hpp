#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ulma/cli/artifacts.hpp"
#include "ulma/cli/log.hpp"
#include "ulma/cli/manifest.hpp"
#include "ulma/cli/plot.hpp"
#include "ulma/harf.hpp"
#include "ulma/model/embeddings.hpp"
#include "ulma/model/heads.hpp"
#include "ulma/reward.hpp"
#include "ulma/segmentation.hpp"
#include "ulma/signal/features.hpp"
#include "ulma/signal/wav.hpp"
#include "ulma/synth.hpp"
#include "ulma/units.hpp"
#include "ulma/units_refit.hpp"

namespace ulma::cli {

namespace fs = std::filesystem;
using signal::AudioClip;

/// Flag values shared by all subcommands. Each subcommand binds the subset it uses.
struct Options {
  fs::path manifest, out, codebook, checkpoint;
  std::uint64_t seed = 0;
  std::size_t k = 16;
  std::optional<std::size_t> layer;
  std::size_t epochs = 0;
  std::size_t steps = 500;
  double step_size = 0.0;
  double hi = 0.6, lo = 0.2;
  bool svg = false;
  std::string squash = "logistic";
  bool raw_chirps = false;
  std::size_t max_iter = 300;
  bool train_encoder = false;
  double threshold = 0.5, window_s = 0.5, hop_s = 0.25;
  // synth-harf
  std::optional<double> t1, h1, t2, h2, target_len;
  double length_ratio = 1.05;
  std::size_t samples = 101;
  // synth-corpus
  std::string kind = "analysis";
  std::size_t count = 10;
};

// ---------------------------------------------------------------------------
// Loading

struct LoadedClip {
  ManifestEntry entry;
  AudioClip clip;
  std::string stem;  // file-name-safe identifier derived from the manifest path
};

/// Manifest path → file-name-safe stem, deduplicated within one manifest.
inline std::vector<std::string> clip_stems(const std::vector<ManifestEntry>& entries) {
  std::vector<std::string> out;
  std::map<std::string, std::size_t> seen;
  for (const auto& e : entries) {
    std::string s;
    for (char c : e.path) s += (std::isalnum(static_cast<unsigned char>(c)) || c == '-') ? c : '_';
    const std::size_t n = seen[s]++;
    out.push_back(n == 0 ? s : s + "_dup" + std::to_string(n));
  }
  return out;
}

inline AudioClip load_entry(const fs::path& manifest, const ManifestEntry& e) {
  AudioClip clip = signal::load_wav(resolve(manifest, e.path));
  clip.source_id = e.path;
  return clip;
}

/// Loads every clip; any failure is fatal.
inline std::vector<LoadedClip> load_all(const fs::path& manifest) {
  const auto entries = parse_manifest(manifest);
  const auto stems = clip_stems(entries);
  std::vector<LoadedClip> out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    debug("loading " + entries[i].path);
    out.push_back({entries[i], load_entry(manifest, entries[i]), stems[i]});
  }
  if (out.empty()) throw Error(Errc::EmptyDataset, "manifest lists no clips");
  return out;
}

inline std::vector<AudioClip> clips_of(const std::vector<LoadedClip>& loaded) {
  std::vector<AudioClip> out;
  out.reserve(loaded.size());
  for (const auto& l : loaded) out.push_back(l.clip);
  return out;
}

inline Checkpoint checkpoint_or_fresh(const Options& o, int sample_rate, std::size_t k_units) {
  if (!o.checkpoint.empty()) return load_checkpoint(o.checkpoint);
  auto cfg = model::EncoderConfig::for_rate(sample_rate);
  cfg.k_units = k_units;
  Checkpoint ck;
  ck.encoder = model::EncoderModel(cfg, o.seed);
  return ck;
}

// ---------------------------------------------------------------------------
// Manifest ↔ JSON

inline json entry_to_json(const ManifestEntry& e) {
  json j;
  j["path"] = e.path;
  if (e.label) j["label"] = *e.label;
  if (e.context) j["context"] = context_name(*e.context);
  if (e.prefer_over) j["prefer_over"] = *e.prefer_over;
  if (!e.events.empty()) {
    json ev = json::array();
    for (const auto& x : e.events) ev.push_back({{"onset_s", x.onset_s}, {"offset_s", x.offset_s}, {"tags", x.tags}});
    j["events"] = ev;
  }
  return j;
}

inline std::string manifest_text(const std::vector<ManifestEntry>& entries) {
  std::string s;
  for (const auto& e : entries) s += entry_to_json(e).dump() + "\n";
  return s;
}

// ---------------------------------------------------------------------------
// analyze

inline json burst_json(const segmentation::Burst& b) {
  return {{"onset_s", b.onset_s}, {"offset_s", b.offset_s}, {"peak", b.peak}, {"peak_s", b.peak_s}, {"density", b.density}};
}

struct AnalysisRecord {
  ManifestEntry entry;
  double duration_s = 0.0;
  std::optional<segmentation::VocalPattern> pattern;
  segmentation::Reaction reaction = segmentation::Reaction::NoContextualResponse;
  double ulm_score = 0.0;
  std::optional<Errc> error;
  std::string error_message;
};

struct AnalysisReport {
  std::vector<AnalysisRecord> records;
  std::optional<segmentation::CorrelationReport> correlation;
  std::string correlation_status;  // "ok" or "skipped"
  std::string correlation_reason;
};

inline json record_json(const AnalysisRecord& r) {
  json j = entry_to_json(r.entry);
  if (r.error) {
    j["error"] = {{"kind", std::string(errc_name(*r.error))}, {"message", r.error_message}};
    return j;
  }
  j["duration_s"] = r.duration_s;
  const auto& p = *r.pattern;
  j["ism"] = burst_json(p.ism);
  j["fil"] = p.fil ? burst_json(*p.fil) : json(nullptr);
  j["chirps_s"] = p.chirps_s ? json(*p.chirps_s) : json(nullptr);
  j["height_ratio"] = p.height_ratio ? json(*p.height_ratio) : json(nullptr);
  j["harf_level"] = p.harf_level;
  j["reaction"] = std::string(segmentation::reaction_name(r.reaction));
  j["ulm_score"] = r.ulm_score;
  return j;
}

inline json correlation_json(const AnalysisReport& rep) {
  json j;
  j["status"] = rep.correlation_status;
  if (!rep.correlation) {
    j["reason"] = rep.correlation_reason;
    return j;
  }
  const auto& c = *rep.correlation;
  j["n_positive"] = c.n_positive;
  j["n_negative"] = c.n_negative;
  j["mean_ratio_positive"] = c.mean_positive;
  j["mean_ratio_negative"] = c.mean_negative;
  j["threshold"] = c.threshold;
  j["balanced_accuracy"] = c.balanced_accuracy;
  j["auc"] = c.auc;
  return j;
}

inline segmentation::Squash parse_squash(const std::string& s) {
  if (s == "logistic") return segmentation::Squash::Logistic;
  if (s == "identity") return segmentation::Squash::Identity;
  if (s == "tanh") return segmentation::Squash::Tanh;
  throw Error(Errc::InvalidArgument, "unknown squash \"" + s + "\"");
}

inline std::string envelope_csv(const segmentation::Decomposition& d) {
  std::vector<bool> in_burst(d.env.size(), false);
  for (const auto& b : d.bursts)
    for (std::size_t t = b.first_frame; t <= b.last_frame && t < d.env.size(); ++t) in_burst[t] = true;
  std::vector<std::vector<std::string>> rows;
  for (std::size_t t = 0; t < d.env.size(); ++t)
    rows.push_back({num(d.env.frame_centre_s(t)), num(d.env.values[t]), in_burst[t] ? "1" : "0"});
  return csv_text("envelope", {"t_s", "envelope", "in_burst"}, rows);
}

inline std::string envelope_svg(const segmentation::Decomposition& d, const std::string& title) {
  SvgPlot plot;
  plot.title = title;
  for (std::size_t t = 0; t < d.env.size(); ++t) plot.line.emplace_back(d.env.frame_centre_s(t), d.env.values[t]);
  for (const auto& b : d.bursts) {
    plot.bands.push_back({b.onset_s, b.offset_s});
    plot.markers.push_back({b.peak_s, b.peak});
  }
  return plot.render();
}

inline AnalysisReport cmd_analyze(const Options& o) {
  (void)segmentation::classify_reaction(std::nullopt, o.hi, o.lo);  // validates the thresholds up front
  const segmentation::UlmConfig ulm{parse_squash(o.squash), !o.raw_chirps};
  const auto entries = parse_manifest(o.manifest);
  const auto stems = clip_stems(entries);
  AnalysisReport rep;
  std::vector<segmentation::LabeledRatio> labeled;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    AnalysisRecord r;
    r.entry = entries[i];
    try {
      const AudioClip clip = load_entry(o.manifest, entries[i]);
      r.duration_s = clip.duration_s();
      const auto d = segmentation::decompose_traced(clip);
      r.pattern = d.pattern;
      r.reaction = segmentation::classify_reaction(d.pattern.height_ratio, o.hi, o.lo);
      r.ulm_score = segmentation::ulm_score(d.pattern, ulm, r.duration_s);
      write_text(o.out / "envelopes" / (stems[i] + ".csv"), envelope_csv(d));
      if (o.svg) write_text(o.out / "plots" / (stems[i] + ".svg"), envelope_svg(d, entries[i].path));
      if (entries[i].context && *entries[i].context != Context::Neutral && d.pattern.height_ratio)
        labeled.push_back({*d.pattern.height_ratio, *entries[i].context == Context::Positive});
    } catch (const Error& e) {
      info(entries[i].path + ": " + e.what());
      r.error = e.code();
      r.error_message = e.detail();
    }
    rep.records.push_back(std::move(r));
  }

  if (labeled.empty()) {
    rep.correlation_status = "skipped";
    rep.correlation_reason = "no clips with a context label and a measured height ratio";
  } else {
    try {
      rep.correlation = segmentation::correlate_height_reactions(labeled);
      rep.correlation_status = "ok";
    } catch (const Error& e) {
      rep.correlation_status = "skipped";
      rep.correlation_reason = e.detail();
    }
  }

  std::string text = header_line("analysis-report");
  for (const auto& r : rep.records) text += record_json(r).dump() + "\n";
  std::size_t failed = 0;
  for (const auto& r : rep.records) failed += r.error ? 1 : 0;
  json corpus{{"corpus", {{"clips", rep.records.size()}, {"errors", failed}, {"correlation", correlation_json(rep)}}}};
  text += corpus.dump() + "\n";
  write_text(o.out / "report.jsonl", text);
  return rep;
}

// ---------------------------------------------------------------------------
// features / cluster

inline signal::FeatureMatrix clip_features(const AudioClip& clip) {
  return signal::mfcc39(clip, signal::FeatureConfig::for_rate(clip.sample_rate));
}

inline std::vector<std::string> feature_columns() {
  std::vector<std::string> cols{"t_s"};
  for (const char* prefix : {"c", "d", "dd"})
    for (int i = 0; i < 13; ++i) cols.push_back(prefix + std::to_string(i));
  return cols;
}

inline void cmd_features(const Options& o) {
  for (const auto& l : load_all(o.manifest)) {
    const auto cfg = signal::FeatureConfig::for_rate(l.clip.sample_rate);
    const auto f = signal::mfcc39(l.clip, cfg);
    const double offset = static_cast<double>(cfg.frame_len) / 2.0 / l.clip.sample_rate;
    std::vector<std::vector<std::string>> rows;
    for (std::size_t t = 0; t < f.values.rows(); ++t) {
      std::vector<std::string> row{num(offset + static_cast<double>(t) * f.hop_s)};
      for (double v : f.values.row(t)) row.push_back(num(v));
      rows.push_back(std::move(row));
    }
    write_text(o.out / "features" / (l.stem + ".csv"), csv_text("mfcc39", feature_columns(), rows));
  }
}

inline units::Codebook cmd_cluster(const Options& o, std::ostream& out) {
  const auto loaded = load_all(o.manifest);
  std::vector<Matrix> parts;
  std::size_t total = 0;
  for (const auto& l : loaded) {
    parts.push_back(clip_features(l.clip).values);
    total += parts.back().rows();
  }
  Matrix all(total, signal::kFeatureDim);
  std::size_t r = 0;
  for (const auto& p : parts)
    for (std::size_t t = 0; t < p.rows(); ++t, ++r) std::copy(p.row(t).begin(), p.row(t).end(), all.row(r).begin());
  units::KMeansTrace trace;
  const auto cb = units::kmeans_fit(all, o.k, o.seed, {o.max_iter, 1e-8}, &trace);
  save_codebook(o.out / "codebook.json", cb);
  out << "clustered " << total << " frames into " << cb.k() << " units, inertia " << num(trace.inertia.back()) << "\n";
  return cb;
}

// ---------------------------------------------------------------------------
// pretrain / refit-units

/// Unit labels on the encoder's frame grid for one clip.
inline std::vector<std::size_t> unit_labels(const units::Codebook& cb, const model::EncoderModel& m,
                                            const AudioClip& clip) {
  const std::size_t frames = m.frames_for(clip);
  if (cb.stage == 2) {
    if (cb.layer < 0) throw Error(Errc::InvalidArgument, "stage-2 codebook has no layer");
    if (cb.dim() != m.config.d_model) throw Error(Errc::DimMismatch, "stage-2 codebook dim differs from d_model");
    return units::assign(cb, m.hidden(clip, static_cast<std::size_t>(cb.layer)));
  }
  if (cb.dim() != signal::kFeatureDim) throw Error(Errc::DimMismatch, "stage-1 codebook must be 39-dimensional");
  const auto cfg = signal::FeatureConfig::for_rate(clip.sample_rate);
  const auto f = signal::mfcc39(clip, cfg);
  const auto src = units::assign(cb, f.values);
  const double src_offset = static_cast<double>(cfg.frame_len) / 2.0 / clip.sample_rate;
  const double hop = 1.0 / model::kFramesPerSecond;
  return units::align_labels(src, f.hop_s, src_offset, frames, hop, hop / 2.0);
}

inline json pretrain_eval(model::EncoderModel& m, const std::vector<AudioClip>& clips,
                          const std::vector<std::vector<std::size_t>>& labels, std::uint64_t seed) {
  Rng rng(seed);
  double loss = 0.0;
  std::size_t masked = 0, correct = 0, n = 0;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    auto mask = model::mask_spans(m.frames_for(clips[i]), m.config, rng);
    if (model::masked_positions(mask).empty()) mask[0] = 1;
    const auto st = model::masked_prediction_loss(m, clips[i], labels[i], mask, false);
    loss += st.loss;
    masked += st.masked;
    correct += st.correct;
    ++n;
  }
  return {{"loss", loss / static_cast<double>(n)},
          {"accuracy", static_cast<double>(correct) / static_cast<double>(masked)}};
}

inline json cmd_pretrain(const Options& o, std::ostream& out) {
  const auto loaded = load_all(o.manifest);
  const auto clips = clips_of(loaded);
  const auto cb = load_codebook(o.codebook);
  if (cb.stage == 2 && o.checkpoint.empty())
    throw Error(Errc::InvalidArgument, "a stage-2 codebook needs --checkpoint to compute hidden-state labels");
  Checkpoint ck = checkpoint_or_fresh(o, clips.front().sample_rate, cb.k());
  auto& m = ck.encoder;
  Rng rng(o.seed);
  if (m.config.k_units != cb.k()) m.reset_unit_table(cb.k(), rng);

  std::vector<std::vector<std::size_t>> labels;
  for (const auto& c : clips) labels.push_back(unit_labels(cb, m, c));

  const std::uint64_t eval_seed = o.seed + 1;
  const json before = pretrain_eval(m, clips, labels, eval_seed);
  std::vector<double> trace;
  for (std::size_t s = 0; s < o.steps; ++s) {
    const std::size_t i = s % clips.size();
    for (int attempt = 0;; ++attempt) {
      try {
        trace.push_back(model::pretrain_step(m, clips[i], labels[i], rng, o.step_size));
        break;
      } catch (const Error& e) {
        if (e.code() != Errc::EmptyMask || attempt >= 100) throw;
      }
    }
    if (!std::isfinite(trace.back())) throw Error(Errc::NonFiniteLoss, "loss diverged at step " + std::to_string(s));
    debug("pretrain step " + std::to_string(s) + " loss " + num(trace.back()));
  }
  const json after = pretrain_eval(m, clips, labels, eval_seed);
  ck.classify.reset();
  ck.detect.reset();
  ck.reward_head.reset();
  save_checkpoint(o.out / "checkpoint.json", ck);
  json rep{{"version", kArtifactVersion}, {"kind", "pretrain-report"}, {"codebook_stage", cb.stage},
           {"steps", o.steps},            {"step_size", o.step_size},    {"seed", o.seed},
           {"eval_before", before},       {"eval_after", after},         {"loss_trace", trace}};
  write_json(o.out / "pretrain_report.json", rep);
  out << "pretrain masked loss " << num(before["loss"].get<double>()) << " -> " << num(after["loss"].get<double>())
      << ", accuracy " << num(after["accuracy"].get<double>()) << "\n";
  return rep;
}

inline units::Codebook cmd_refit_units(const Options& o, std::ostream& out) {
  const auto clips = clips_of(load_all(o.manifest));
  const Checkpoint ck = load_checkpoint(o.checkpoint);
  const std::size_t layer = o.layer.value_or(ck.encoder.config.middle_layer());
  const auto cb = units::refit_from_hidden(ck.encoder, clips, layer, o.k, o.seed, {o.max_iter, 1e-8});
  save_codebook(o.out / "codebook.json", cb);
  out << "refit " << cb.k() << " units at layer " << layer << "\n";
  return cb;
}

// ---------------------------------------------------------------------------
// fine-tuning

inline std::vector<std::size_t> epoch_order(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

inline json cmd_finetune_classify(const Options& o, std::ostream& out) {
  const auto loaded = load_all(o.manifest);
  std::set<std::string> names;
  for (const auto& l : loaded) {
    if (!l.entry.label) throw Error(Errc::InvalidArgument, "line " + std::to_string(l.entry.line) + ": no label");
    names.insert(*l.entry.label);
  }
  if (names.size() < 2) throw Error(Errc::MissingClass, "need at least two distinct labels");
  const std::vector<std::string> classes(names.begin(), names.end());
  std::vector<std::size_t> labels;
  for (const auto& l : loaded)
    labels.push_back(static_cast<std::size_t>(std::find(classes.begin(), classes.end(), *l.entry.label) - classes.begin()));
  const auto clips = clips_of(loaded);

  Checkpoint ck = checkpoint_or_fresh(o, clips.front().sample_rate, 16);
  auto& m = ck.encoder;
  HeadBundle hb{model::FineTuneHead(model::HeadKind::Classify, m.config.d_model, classes.size()), classes};
  Rng rng(o.seed);
  std::vector<double> trace;
  for (std::size_t e = 0; e < o.epochs; ++e) {
    double sum = 0.0;
    for (std::size_t i : epoch_order(clips.size(), rng))
      sum += model::finetune_classify_step(m, hb.head, clips[i], labels[i], o.step_size);
    trace.push_back(sum / static_cast<double>(clips.size()));
    if (!std::isfinite(trace.back())) throw Error(Errc::NonFiniteLoss, "loss diverged at epoch " + std::to_string(e));
    debug("classify epoch " + std::to_string(e) + " loss " + num(trace.back()));
  }
  std::size_t correct = 0;
  json predictions = json::array();
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const std::size_t p = model::predict_class(m, hb.head, clips[i]);
    correct += p == labels[i] ? 1 : 0;
    predictions.push_back({{"path", loaded[i].entry.path}, {"label", classes[labels[i]]}, {"predicted", classes[p]}});
  }
  const double acc = static_cast<double>(correct) / static_cast<double>(clips.size());
  ck.classify = std::move(hb);
  save_checkpoint(o.out / "classifier.json", ck);
  json rep{{"version", kArtifactVersion}, {"kind", "classify-report"}, {"classes", classes},
           {"epochs", o.epochs},          {"loss_trace", trace},     {"train_accuracy", acc},
           {"predictions", predictions}};
  write_json(o.out / "classify_report.json", rep);
  out << "classify train accuracy " << num(acc) << "\n";
  return rep;
}

inline json cmd_finetune_detect(const Options& o, std::ostream& out) {
  const auto loaded = load_all(o.manifest);
  std::set<std::string> names;
  for (const auto& l : loaded)
    for (const auto& ev : l.entry.events) names.insert(ev.tags.begin(), ev.tags.end());
  if (names.empty()) throw Error(Errc::EmptyDataset, "no tagged events in the manifest");
  const std::vector<std::string> classes(names.begin(), names.end());
  std::vector<std::vector<double>> targets;
  for (const auto& l : loaded) {
    std::vector<double> t(classes.size(), 0.0);
    for (const auto& ev : l.entry.events)
      for (const auto& tag : ev.tags)
        t[static_cast<std::size_t>(std::find(classes.begin(), classes.end(), tag) - classes.begin())] = 1.0;
    targets.push_back(std::move(t));
  }
  const auto clips = clips_of(loaded);

  Checkpoint ck = checkpoint_or_fresh(o, clips.front().sample_rate, 16);
  auto& m = ck.encoder;
  HeadBundle hb{model::FineTuneHead(model::HeadKind::Detect, m.config.d_model, classes.size()), classes};
  Rng rng(o.seed);
  std::vector<double> trace;
  for (std::size_t e = 0; e < o.epochs; ++e) {
    double sum = 0.0;
    for (std::size_t i : epoch_order(clips.size(), rng))
      sum += model::finetune_detect_step(m, hb.head, clips[i], targets[i], o.step_size);
    trace.push_back(sum / static_cast<double>(clips.size()));
    if (!std::isfinite(trace.back())) throw Error(Errc::NonFiniteLoss, "loss diverged at epoch " + std::to_string(e));
    debug("detect epoch " + std::to_string(e) + " loss " + num(trace.back()));
  }

  std::string detections;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    json spans = json::array();
    for (const auto& s : model::sliding_window_detect(m, hb.head, clips[i], o.window_s, o.hop_s, o.threshold))
      spans.push_back({{"tag", classes[s.label]}, {"onset_s", s.onset_s}, {"offset_s", s.offset_s}, {"score", s.score}});
    detections += json{{"path", loaded[i].entry.path}, {"detections", spans}}.dump() + "\n";
  }
  ck.detect = std::move(hb);
  save_checkpoint(o.out / "detector.json", ck);
  write_text(o.out / "detections.jsonl",
             header_line("detections") + detections);
  json rep{{"version", kArtifactVersion}, {"kind", "detect-report"}, {"classes", classes},
           {"epochs", o.epochs},          {"loss_trace", trace},   {"final_loss", trace.empty() ? 0.0 : trace.back()}};
  write_json(o.out / "detect_report.json", rep);
  out << "detect final mean BCE " << num(rep["final_loss"].get<double>()) << "\n";
  return rep;
}

// ---------------------------------------------------------------------------
// reward-train

inline json cmd_reward_train(const Options& o, std::ostream& out) {
  const auto loaded = load_all(o.manifest);
  std::map<std::string, std::size_t> by_path;
  for (std::size_t i = 0; i < loaded.size(); ++i) by_path.emplace(loaded[i].entry.path, i);
  std::vector<reward::PreferencePair> pairs;
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    const auto& e = loaded[i].entry;
    if (!e.prefer_over) continue;
    const auto it = by_path.find(*e.prefer_over);
    if (it == by_path.end())
      throw Error(Errc::InvalidArgument, "line " + std::to_string(e.line) + ": prefer_over names an unlisted clip");
    pairs.push_back({i, it->second, {}});
  }
  const auto clips = clips_of(loaded);

  Checkpoint ck = checkpoint_or_fresh(o, clips.front().sample_rate, 16);
  reward::RewardModel rm(std::move(ck.encoder), o.seed);
  reward::RewardTrainOptions opt;
  opt.epochs = o.epochs;
  opt.step_size = o.step_size;
  opt.seed = o.seed;
  opt.train_encoder = o.train_encoder;
  const auto rep = reward::train_reward(rm, clips, pairs, opt);

  const auto scores = reward::score_all(rm, clips);
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < clips.size(); ++i) rows.push_back({loaded[i].entry.path, num(scores[i])});
  write_text(o.out / "scores.csv", csv_text("reward-scores", {"path", "reward"}, rows));
  ck.encoder = std::move(rm.encoder);
  ck.reward_head = std::move(rm.head);
  save_checkpoint(o.out / "reward.json", ck);
  json j{{"version", kArtifactVersion},   {"kind", "reward-report"},     {"pairs", pairs.size()},
         {"initial_loss", rep.initial_loss}, {"final_loss", rep.final_loss}, {"pairwise_accuracy", rep.pairwise_accuracy},
         {"loss_trace", rep.loss_trace}};
  write_json(o.out / "reward_report.json", j);
  out << "reward pairwise accuracy " << num(rep.pairwise_accuracy) << "\n";
  return j;
}

// ---------------------------------------------------------------------------
// synth-harf

inline json harf_fit(const harf::Anchor& a, const harf::Anchor& b, const Options& o, const fs::path& csv,
                     const fs::path& svg) {
  const double chord = harf::chord_length(a, b);
  const double target = o.target_len.value_or(o.length_ratio * chord);
  const auto fit = harf::fit_sag(a, b, target);
  const auto pts = harf::render_harf(fit.curve, o.samples);
  std::vector<std::vector<std::string>> rows;
  for (const auto& [t, y] : pts) rows.push_back({num(t), num(y)});
  write_text(csv, csv_text("harf", {"t_s", "y"}, rows));
  if (o.svg) {
    SvgPlot plot;
    plot.title = "harf";
    plot.line = pts;
    plot.markers = {{a.t, a.h}, {b.t, b.h}};
    write_text(svg, plot.render());
  }
  return {{"anchors", {{a.t, a.h}, {b.t, b.h}}},
          {"chord", chord},
          {"target_length", target},
          {"sag", fit.sag},
          {"arc_length", harf::arc_length(fit.curve)},
          {"residual", fit.residual},
          {"iterations", fit.iterations},
          {"coefficients", {fit.curve.a, fit.curve.b, fit.curve.c}}};
}

inline void cmd_synth_harf(const Options& o, std::ostream& out) {
  if (o.manifest.empty()) {
    if (!o.t1 || !o.h1 || !o.t2 || !o.h2) throw Error(Errc::InvalidArgument, "give --manifest or all of --t1 --h1 --t2 --h2");
    json j = harf_fit({*o.t1, *o.h1}, {*o.t2, *o.h2}, o, o.out / "harf.csv", o.out / "harf.svg");
    j["version"] = kArtifactVersion;
    j["kind"] = "harf";
    write_json(o.out / "harf.json", j);
    out << "harf sag " << num(j["sag"].get<double>()) << "\n";
    return;
  }
  const auto entries = parse_manifest(o.manifest);
  const auto stems = clip_stems(entries);
  std::string text = header_line("harf-report");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    json rec{{"path", entries[i].path}};
    try {
      const auto p = segmentation::decompose(load_entry(o.manifest, entries[i]));
      if (!p.fil) throw Error(Errc::InvalidArgument, "no Fil burst to anchor the harf");
      rec["harf"] = harf_fit({p.ism.peak_s, p.ism.peak}, {p.fil->peak_s, p.fil->peak}, o,
                             o.out / "harf" / (stems[i] + ".csv"), o.out / "harf" / (stems[i] + ".svg"));
    } catch (const Error& e) {
      rec["error"] = {{"kind", std::string(errc_name(e.code()))}, {"message", e.detail()}};
    }
    text += rec.dump() + "\n";
  }
  write_text(o.out / "harf_report.jsonl", text);
}

// ---------------------------------------------------------------------------
// export-embeddings / plot

inline void cmd_export_embeddings(const Options& o) {
  const auto clips = clips_of(load_all(o.manifest));
  const Checkpoint ck = load_checkpoint(o.checkpoint);
  const std::size_t layer = o.layer.value_or(ck.encoder.config.middle_layer());
  const auto rows = model::export_embeddings(ck.encoder, clips, layer);
  std::vector<std::string> cols{"clip_id", "frame"};
  for (std::size_t j = 0; j < ck.encoder.config.d_model; ++j) cols.push_back("h" + std::to_string(j));
  std::vector<std::vector<std::string>> out_rows;
  for (const auto& r : rows) {
    std::vector<std::string> row{r.clip_id, std::to_string(r.frame)};
    for (double v : r.values) row.push_back(num(v));
    out_rows.push_back(std::move(row));
  }
  write_text(o.out / "embeddings.csv", csv_text("embeddings", cols, out_rows));
}

inline void cmd_plot(const Options& o) {
  for (const auto& l : load_all(o.manifest)) {
    segmentation::Decomposition d;
    d.env = signal::envelope(l.clip);
    d.bursts = segmentation::detect_bursts(d.env);
    write_text(o.out / "plots" / (l.stem + ".csv"), envelope_csv(d));
    if (o.svg) write_text(o.out / "plots" / (l.stem + ".svg"), envelope_svg(d, l.entry.path));
  }
}

// ---------------------------------------------------------------------------
// synth-corpus

inline void cmd_synth_corpus(const Options& o, std::ostream& out) {
  Rng rng(o.seed);
  std::vector<ManifestEntry> entries;
  auto emit = [&](const AudioClip& c, ManifestEntry e) {
    e.path = "wav/" + std::to_string(entries.size()) + ".wav";
    write_text(o.out / e.path, signal::encode_wav(c));
    entries.push_back(std::move(e));
  };
  if (o.kind == "analysis") {
    std::uniform_real_distribution<double> ratio(0.2, 1.0), amp(0.5, 0.9);
    for (std::size_t i = 0; i < o.count; ++i) {
      const double r = ratio(rng);
      ManifestEntry e;
      e.context = r >= 0.5 ? Context::Positive : Context::Negative;
      emit(synth::two_burst_clip(rng, amp(rng), r), e);
    }
  } else if (o.kind == "units") {
    const auto c = synth::markov_unit_corpus(o.count, rng, 1.0, 0.97);
    for (const auto& clip : c.clips) emit(clip, {});
  } else if (o.kind == "classes") {
    const auto c = synth::tone_class_corpus((o.count + 1) / 2, rng);
    for (std::size_t i = 0; i < c.clips.size(); ++i) {
      ManifestEntry e;
      e.label = c.clip_labels[i] == 0 ? "low" : "high";
      emit(c.clips[i], e);
    }
  } else if (o.kind == "detect") {
    const auto c = synth::detection_corpus(o.count, rng);
    for (std::size_t i = 0; i < c.clips.size(); ++i) {
      ManifestEntry e;
      for (const auto& ev : c.events[i]) e.events.push_back({ev.onset_s, ev.offset_s, {"e" + std::to_string(ev.type)}});
      emit(c.clips[i], e);
    }
  } else if (o.kind == "preference") {
    // Disjoint pairs so every chosen clip has exactly one prefer_over.
    const auto c = synth::preference_corpus(2 * o.count, 0, rng);
    for (std::size_t i = 0; i < o.count; ++i) {
      const std::size_t a = 2 * i, b = 2 * i + 1;
      const std::size_t hi = c.peaks[a] >= c.peaks[b] ? a : b;
      ManifestEntry chosen;
      chosen.prefer_over = "wav/" + std::to_string(entries.size() + 1) + ".wav";
      emit(c.clips[hi], chosen);
      emit(c.clips[hi == a ? b : a], {});
    }
  } else {
    throw Error(Errc::InvalidArgument, "unknown corpus kind \"" + o.kind + "\"");
  }
  write_text(o.out / "manifest.jsonl", manifest_text(entries));
  out << "wrote " << entries.size() << " clips to " << (o.out / "manifest.jsonl").string() << "\n";
}

// ---------------------------------------------------------------------------
// Entry point

/// Runs one command line. args excludes the program name. Returns the process exit code:
/// 0 on success, 1 on a fatal error, 2 on a usage error.
inline int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"ulma-kit: bioacoustic segmentation, acoustic units and toy encoders", "ulma"};
  app.require_subcommand(1);
  Options o;

  auto manifest = [&](CLI::App* s, bool required = true) {
    auto* opt = s->add_option("--manifest", o.manifest, "JSON Lines dataset manifest");
    if (required) opt->required();
  };
  auto out_dir = [&](CLI::App* s) { s->add_option("--out", o.out, "output directory")->required(); };
  auto seed = [&](CLI::App* s) { s->add_option("--seed", o.seed, "random seed")->required(); };
  // Subcommands share one Options, so per-subcommand defaults are applied after parsing.
  std::vector<std::function<void()>> defaults;
  auto epochs = [&](CLI::App* s, std::size_t def) {
    auto* opt = s->add_option("--epochs", o.epochs, "training epochs (default " + std::to_string(def) + ")");
    defaults.push_back([=, &o] {
      if (s->parsed() && opt->count() == 0) o.epochs = def;
    });
  };
  auto step = [&](CLI::App* s, double def) {
    auto* opt = s->add_option("--step-size", o.step_size, "SGD step size (default " + num(def) + ")");
    defaults.push_back([=, &o] {
      if (s->parsed() && opt->count() == 0) o.step_size = def;
    });
  };
  auto checkpoint = [&](CLI::App* s, bool required) {
    auto* opt = s->add_option("--checkpoint", o.checkpoint, "encoder checkpoint");
    if (required) opt->required();
  };

  auto* analyze = app.add_subcommand("analyze", "Ism/Fil/Harf analysis report for every clip");
  manifest(analyze);
  out_dir(analyze);
  analyze->add_option("--hi", o.hi, "StrongEngagement threshold on the height ratio")->capture_default_str();
  analyze->add_option("--lo", o.lo, "LowInterest threshold on the height ratio")->capture_default_str();
  analyze->add_flag("--svg", o.svg, "also write SVG envelope plots");
  analyze->add_option("--squash", o.squash, "ULM squashing function")
      ->check(CLI::IsMember({"logistic", "identity", "tanh"}))
      ->capture_default_str();
  analyze->add_flag("--raw-chirps", o.raw_chirps, "use chirps in seconds instead of normalizing by clip duration");

  auto* features = app.add_subcommand("features", "write 39-dim MFCC CSVs");
  manifest(features);
  out_dir(features);

  auto* cluster = app.add_subcommand("cluster", "stage-1 k-means over MFCC frames");
  manifest(cluster);
  out_dir(cluster);
  seed(cluster);
  cluster->add_option("--k", o.k, "number of units")->capture_default_str();
  cluster->add_option("--max-iter", o.max_iter, "Lloyd iteration cap")->capture_default_str();

  auto* pretrain = app.add_subcommand("pretrain", "masked unit prediction");
  manifest(pretrain);
  out_dir(pretrain);
  seed(pretrain);
  pretrain->add_option("--codebook", o.codebook, "codebook giving the target units")->required();
  checkpoint(pretrain, false);
  pretrain->add_option("--steps", o.steps, "SGD steps, one clip each")->capture_default_str();
  step(pretrain, 0.03);

  auto* refit = app.add_subcommand("refit-units", "stage-2 k-means over encoder hidden states");
  manifest(refit);
  out_dir(refit);
  seed(refit);
  checkpoint(refit, true);
  refit->add_option("--k", o.k, "number of units")->capture_default_str();
  refit->add_option("--layer", o.layer, "transformer layer (default: middle)");
  refit->add_option("--max-iter", o.max_iter, "Lloyd iteration cap")->capture_default_str();

  auto* classify = app.add_subcommand("finetune-classify", "train a clip classification head");
  manifest(classify);
  out_dir(classify);
  seed(classify);
  checkpoint(classify, false);
  epochs(classify, 50);
  step(classify, 0.05);

  auto* detect = app.add_subcommand("finetune-detect", "train a multi-label event detection head");
  manifest(detect);
  out_dir(detect);
  seed(detect);
  checkpoint(detect, false);
  epochs(detect, 40);
  step(detect, 0.05);
  detect->add_option("--threshold", o.threshold, "sigmoid score for a detection")->capture_default_str();
  detect->add_option("--window", o.window_s, "sliding window, seconds")->capture_default_str();
  detect->add_option("--hop", o.hop_s, "sliding window hop, seconds")->capture_default_str();

  auto* reward_cmd = app.add_subcommand("reward-train", "fit a scalar reward head on preference pairs");
  manifest(reward_cmd);
  out_dir(reward_cmd);
  seed(reward_cmd);
  checkpoint(reward_cmd, false);
  epochs(reward_cmd, 500);
  step(reward_cmd, 0.5);
  reward_cmd->add_flag("--train-encoder", o.train_encoder, "also update the transformer layers");

  auto* harf_cmd = app.add_subcommand("synth-harf", "fit a harf parabola of prescribed arc length");
  manifest(harf_cmd, false);
  out_dir(harf_cmd);
  harf_cmd->add_option("--t1", o.t1, "first anchor time");
  harf_cmd->add_option("--h1", o.h1, "first anchor height");
  harf_cmd->add_option("--t2", o.t2, "second anchor time");
  harf_cmd->add_option("--h2", o.h2, "second anchor height");
  harf_cmd->add_option("--length-ratio", o.length_ratio, "target length as a multiple of the chord")
      ->capture_default_str();
  harf_cmd->add_option("--target-len", o.target_len, "absolute target arc length");
  harf_cmd->add_option("--samples", o.samples, "points in the rendered curve")->capture_default_str();
  harf_cmd->add_flag("--svg", o.svg, "also write SVG plots");

  auto* embed = app.add_subcommand("export-embeddings", "dump per-frame hidden states as CSV");
  manifest(embed);
  out_dir(embed);
  checkpoint(embed, true);
  embed->add_option("--layer", o.layer, "transformer layer (default: middle)");

  auto* plot = app.add_subcommand("plot", "envelope CSV with burst flags, optional SVG");
  manifest(plot);
  out_dir(plot);
  plot->add_flag("--svg", o.svg, "also write SVG plots");

  auto* corpus = app.add_subcommand("synth-corpus", "write a synthetic WAV corpus and manifest");
  out_dir(corpus);
  seed(corpus);
  corpus->add_option("--kind", o.kind, "corpus kind")
      ->check(CLI::IsMember({"analysis", "units", "classes", "detect", "preference"}))
      ->capture_default_str();
  corpus->add_option("--count", o.count, "number of clips (pairs for preference)")->capture_default_str();

  try {
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << "error: Usage: " << e.what() << "\n";
    return 2;
  }
  for (const auto& f : defaults) f();

  try {
    if (analyze->parsed()) {
      const auto rep = cmd_analyze(o);
      out << "analyzed " << rep.records.size() << " clips, correlation " << rep.correlation_status << "\n";
    } else if (features->parsed()) {
      cmd_features(o);
    } else if (cluster->parsed()) {
      cmd_cluster(o, out);
    } else if (pretrain->parsed()) {
      cmd_pretrain(o, out);
    } else if (refit->parsed()) {
      cmd_refit_units(o, out);
    } else if (classify->parsed()) {
      cmd_finetune_classify(o, out);
    } else if (detect->parsed()) {
      cmd_finetune_detect(o, out);
    } else if (reward_cmd->parsed()) {
      cmd_reward_train(o, out);
    } else if (harf_cmd->parsed()) {
      cmd_synth_harf(o, out);
    } else if (embed->parsed()) {
      cmd_export_embeddings(o);
    } else if (plot->parsed()) {
      cmd_plot(o);
    } else if (corpus->parsed()) {
      cmd_synth_corpus(o, out);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: Internal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

inline int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  return run_cli(std::vector<std::string>(argv + 1, argv + argc), out, err);
}

}  // namespace ulma::cli
