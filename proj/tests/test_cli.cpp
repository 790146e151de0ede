#include <gtest/gtest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "ulma/cli/commands.hpp"

using namespace ulma;
using namespace ulma::cli;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(std::move(args), out, err);
  return {code, out.str(), err.str()};
}

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("ulma_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }
  std::string operator/(const std::string& s) const { return (path_ / s).string(); }

 private:
  fs::path path_;
};

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::optional<Errc> error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

}  // namespace

TEST(Manifest, Parsing) {
  EXPECT_TRUE(parse_manifest_text("").empty());
  EXPECT_TRUE(parse_manifest_text("\n  \n").empty());
  const auto one = parse_manifest_text(R"({"path":"a.wav","label":"x","context":"positive"})");
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].path, "a.wav");
  EXPECT_EQ(*one[0].label, "x");
  EXPECT_EQ(*one[0].context, Context::Positive);
  EXPECT_EQ(one[0].line, 1u);

  EXPECT_EQ(error_of([] { parse_manifest_text(R"({"label":"x"})"); }), Errc::MissingPath);
  try {
    parse_manifest_text("{\"path\":\"a.wav\"}\n{\"path\":\"b.wav\"}\n{not json\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::MalformedLine);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
  EXPECT_EQ(error_of([] { parse_manifest_text(R"({"path":"a.wav","context":"maybe"})"); }), Errc::MalformedLine);
  EXPECT_EQ(error_of([] { parse_manifest_text(R"({"path":"a.wav","events":[{"onset_s":2,"offset_s":1}]})"); }),
            Errc::MalformedLine);

  std::vector<std::string> warnings;
  const auto w = parse_manifest_text(R"({"path":"a.wav","colour":"red"})", &warnings);
  EXPECT_EQ(w.size(), 1u);
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("colour"), std::string::npos);
}

TEST(Manifest, EventsRoundTrip) {
  const std::string line = R"({"events":[{"offset_s":0.5,"onset_s":0.25,"tags":["e1"]}],"path":"x.wav"})";
  const auto e = parse_manifest_text(line);
  EXPECT_EQ(entry_to_json(e[0]).dump(), line);
}

TEST(Artifacts, VersionChecks) {
  units::Codebook cb;
  cb.centroids = Matrix{{1.0, 2.0}};
  auto j = codebook_to_json(cb);
  EXPECT_EQ(codebook_from_json(j).centroids, cb.centroids);
  j["version"] = 2;
  EXPECT_EQ(error_of([&] { codebook_from_json(j); }), Errc::VersionMismatch);
  j.erase("version");
  EXPECT_EQ(error_of([&] { codebook_from_json(j); }), Errc::VersionMismatch);

  Checkpoint ck;
  ck.encoder = model::EncoderModel(model::EncoderConfig{}, 3);
  auto cj = checkpoint_to_json(ck);
  const auto back = checkpoint_from_json(cj);
  EXPECT_EQ(back.encoder.blocks[1].attn.wq.weight.value, ck.encoder.blocks[1].attn.wq.weight.value);
  cj["version"] = 0;
  EXPECT_EQ(error_of([&] { checkpoint_from_json(cj); }), Errc::VersionMismatch);

  EXPECT_NO_THROW(check_csv_version(csv_text("x", {"a"}, {{"1"}}), "x"));
  EXPECT_EQ(error_of([] { check_csv_version("a,b\n1,2\n", "x"); }), Errc::VersionMismatch);
  EXPECT_EQ(header_line("analysis-report"), "{\"version\":1,\"kind\":\"analysis-report\"}\n");
}

TEST(Cli, UsageErrorsExitTwo) {
  TempDir d;
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  const auto r = run({"pretrain", "--manifest", d / "m.jsonl", "--out", d / "o", "--codebook", d / "c.json"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("error: Usage:"), std::string::npos);
  EXPECT_EQ(run({"--help"}).code, 0);

  const std::string cmd = std::string(ULMA_CLI_PATH) + " pretrain --manifest " + (d / "m.jsonl") + " --out " +
                          (d / "o") + " --codebook " + (d / "c.json") + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  ASSERT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), 2);
}

TEST(Cli, FatalErrorsExitOne) {
  TempDir d;
  const auto r = run({"cluster", "--manifest", d / "missing.jsonl", "--out", d / "o", "--seed", "1"});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error: IoError:", 0), 0u) << r.err;

  write_text(d.path() / "empty.jsonl", "");
  EXPECT_EQ(run({"cluster", "--manifest", d / "empty.jsonl", "--out", d / "o", "--seed", "1"}).code, 1);
}

TEST(Cli, ClusterIsByteDeterministic) {
  TempDir d;
  ASSERT_EQ(run({"synth-corpus", "--kind", "units", "--count", "4", "--seed", "3", "--out", d / "c"}).code, 0);
  const auto m = d / "c/manifest.jsonl";
  ASSERT_EQ(run({"cluster", "--manifest", m, "--k", "16", "--seed", "7", "--out", d / "a"}).code, 0);
  ASSERT_EQ(run({"cluster", "--manifest", m, "--k", "16", "--seed", "7", "--out", d / "b"}).code, 0);
  const auto a = read_text(d.path() / "a/codebook.json"), b = read_text(d.path() / "b/codebook.json");
  EXPECT_EQ(a, b);
  const auto cb = load_codebook(d.path() / "a/codebook.json");
  EXPECT_EQ(cb.k(), 16u);
  EXPECT_EQ(cb.dim(), 39u);
  EXPECT_EQ(cb.stage, 1);
}

TEST(Cli, AnalyzeTwoBurstClips) {
  TempDir d;
  ASSERT_EQ(run({"synth-corpus", "--kind", "analysis", "--count", "3", "--seed", "4", "--out", d / "c"}).code, 0);
  const auto r = run({"analyze", "--manifest", d / "c/manifest.jsonl", "--out", d / "o", "--svg"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto lines = lines_of(read_text(d.path() / "o/report.jsonl"));
  ASSERT_EQ(lines.size(), 5u);
  EXPECT_EQ(lines[0], "{\"version\":1,\"kind\":\"analysis-report\"}");
  for (std::size_t i = 1; i <= 3; ++i) {
    const auto j = json::parse(lines[i]);
    EXPECT_FALSE(j.contains("error")) << lines[i];
    EXPECT_FALSE(j["fil"].is_null());
    EXPECT_GT(j["height_ratio"].get<double>(), 0.0);
  }
  EXPECT_TRUE(fs::exists(d.path() / "o/envelopes/wav_0_wav.csv"));
  EXPECT_TRUE(fs::exists(d.path() / "o/plots/wav_0_wav.svg"));
  EXPECT_NO_THROW(check_csv_version(read_text(d.path() / "o/envelopes/wav_0_wav.csv"), "envelope"));
}

TEST(Cli, AnalyzeNoiseClipIsRecordedNotFatal) {
  TempDir d;
  Rng rng(1);
  signal::write_wav(d.path() / "noise.wav", synth::noise_clip(rng));
  signal::write_wav(d.path() / "two.wav", synth::two_burst_clip(rng));
  write_text(d.path() / "m.jsonl", "{\"path\":\"noise.wav\"}\n{\"path\":\"two.wav\"}\n");
  const auto r = run({"analyze", "--manifest", d / "m.jsonl", "--out", d / "o"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto lines = lines_of(read_text(d.path() / "o/report.jsonl"));
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(json::parse(lines[1])["error"]["kind"], "NoIsmFound");
  EXPECT_FALSE(json::parse(lines[2]).contains("error"));
  const auto corpus = json::parse(lines[3])["corpus"];
  EXPECT_EQ(corpus["errors"], 1);
  EXPECT_EQ(corpus["correlation"]["status"], "skipped");
}

TEST(Cli, AnalyzePermutedManifestPermutesRecords) {
  TempDir d;
  ASSERT_EQ(run({"synth-corpus", "--kind", "analysis", "--count", "8", "--seed", "9", "--out", d / "c"}).code, 0);
  auto lines = lines_of(read_text(d.path() / "c/manifest.jsonl"));
  std::reverse(lines.begin(), lines.end());
  std::string rev;
  for (const auto& l : lines) rev += l + "\n";
  write_text(d.path() / "c/reversed.jsonl", rev);
  ASSERT_EQ(run({"analyze", "--manifest", d / "c/manifest.jsonl", "--out", d / "a"}).code, 0);
  ASSERT_EQ(run({"analyze", "--manifest", d / "c/reversed.jsonl", "--out", d / "b"}).code, 0);
  const auto a = lines_of(read_text(d.path() / "a/report.jsonl"));
  auto b = lines_of(read_text(d.path() / "b/report.jsonl"));
  ASSERT_EQ(a.size(), b.size());
  std::reverse(b.begin() + 1, b.end() - 1);
  for (std::size_t i = 1; i + 1 < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
  const auto ca = json::parse(a.back())["corpus"]["correlation"], cb = json::parse(b.back())["corpus"]["correlation"];
  ASSERT_EQ(ca["status"], "ok");
  for (const char* k : {"threshold", "balanced_accuracy", "auc", "mean_ratio_positive", "mean_ratio_negative"})
    EXPECT_NEAR(ca[k].get<double>(), cb[k].get<double>(), 1e-12) << k;
}

TEST(Cli, SynthHarfAnchors) {
  TempDir d;
  const auto r = run({"synth-harf", "--t1", "0", "--h1", "0", "--t2", "1", "--h2", "0", "--target-len", "1.1",
                      "--samples", "11", "--out", d / "h", "--svg"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = read_json(d.path() / "h/harf.json");
  EXPECT_NEAR(j["arc_length"].get<double>(), 1.1, 1e-9);
  EXPECT_EQ(lines_of(read_text(d.path() / "h/harf.csv")).size(), 13u);
  EXPECT_TRUE(fs::exists(d.path() / "h/harf.svg"));

  const auto bad = run({"synth-harf", "--t1", "0", "--h1", "0", "--t2", "1", "--h2", "0", "--target-len", "0.5",
                        "--out", d / "h2"});
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.err.find("InfeasibleLength"), std::string::npos);
}

TEST(Cli, FeaturesAndEmbeddings) {
  TempDir d;
  ASSERT_EQ(run({"synth-corpus", "--kind", "units", "--count", "2", "--seed", "3", "--out", d / "c"}).code, 0);
  const auto m = d / "c/manifest.jsonl";
  ASSERT_EQ(run({"features", "--manifest", m, "--out", d / "f"}).code, 0);
  const auto feat = lines_of(read_text(d.path() / "f/features/wav_0_wav.csv"));
  EXPECT_EQ(feat[0], "# ulma-kit v1 mfcc39");
  EXPECT_EQ(std::count(feat[1].begin(), feat[1].end(), ','), 39);

  ASSERT_EQ(run({"cluster", "--manifest", m, "--k", "4", "--seed", "1", "--out", d / "k"}).code, 0);
  ASSERT_EQ(run({"pretrain", "--manifest", m, "--codebook", d / "k/codebook.json", "--steps", "4", "--seed", "1",
                 "--out", d / "p"})
                .code,
            0);
  ASSERT_EQ(run({"export-embeddings", "--manifest", m, "--checkpoint", d / "p/checkpoint.json", "--out", d / "e"}).code, 0);
  const auto emb = lines_of(read_text(d.path() / "e/embeddings.csv"));
  EXPECT_EQ(emb.size(), 2u + 100u);
  EXPECT_EQ(std::count(emb[1].begin(), emb[1].end(), ','), 2 + 31);

  ASSERT_EQ(run({"refit-units", "--manifest", m, "--checkpoint", d / "p/checkpoint.json", "--k", "4", "--seed", "2",
                 "--out", d / "r"})
                .code,
            0);
  const auto cb = load_codebook(d.path() / "r/codebook.json");
  EXPECT_EQ(cb.stage, 2);
  EXPECT_EQ(cb.layer, 0);
  EXPECT_EQ(cb.dim(), 32u);
  const auto stage2 = run({"pretrain", "--manifest", m, "--codebook", d / "r/codebook.json", "--steps", "2", "--seed", "1",
                           "--out", d / "p2"});
  EXPECT_EQ(stage2.code, 1);
}

TEST(Cli, LogLevelFromEnvironment) {
  ::setenv("ULMA_LOG", "debug", 1);
  EXPECT_EQ(log_level(), LogLevel::Debug);
  ::setenv("ULMA_LOG", "info", 1);
  EXPECT_EQ(log_level(), LogLevel::Info);
  ::setenv("ULMA_LOG", "verbose", 1);
  EXPECT_EQ(log_level(), LogLevel::Error);
  ::unsetenv("ULMA_LOG");
  EXPECT_EQ(log_level(), LogLevel::Error);
}
