#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"
#include "foldmap/dataset.hpp"
#include "foldmap/model.hpp"

using namespace foldmap;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = FOLDMAP_FIXTURES_DIR;

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::string> rows(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

std::vector<std::string> cells(const std::string& row) {
  std::vector<std::string> out;
  std::istringstream in(row);
  for (std::string c; std::getline(in, c, '\t');) out.push_back(c);
  return out;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("foldmap_test_cli_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

const std::string kCath = (kFixtures / "cath-list.txt").string();

}  // namespace

TEST_CASE("preprocess the fixture structures") {
  TempDir tmp("pre");
  const auto out = tmp.path / "stacks";
  const Run r = run({"preprocess", "--structures", (kFixtures / "structures").string(), "--cath-list", kCath, "--out",
                     out.string(), "--jobs", "2"});
  CHECK(r.code == 0);
  CHECK(r.out == "preprocessed\t5\tfailed\t0\n");
  const Manifest m = read_manifest(out / "manifest.tsv");
  REQUIRE(m.entries.size() == 5);
  std::map<ResolutionGroup, int> groups;
  for (const auto& e : m.entries) {
    ++groups[e.group];
    const MapStack s = read_stack_file(m.resolve(e));
    CHECK(s.domain_id == e.domain_id);
    CHECK(s.selection == Selection::BB);
    CHECK(e.atom_count.value() > 0);  // stack files leave the count to the manifest
    CHECK(s.nb_valid == fs::exists(kFixtures / "structures" / (e.domain_id + ".pqr")));
  }
  CHECK(groups[ResolutionGroup::HR] == 3);
  CHECK(groups[ResolutionGroup::LR] == 1);
  CHECK(groups[ResolutionGroup::NMR] == 1);
  const auto run_json = nlohmann::json::parse(slurp(out / "run.json"));
  CHECK(run_json["command"] == "preprocess");
  CHECK(run_json["config"]["selection"] == "BB");
  CHECK(rows(slurp(out / "failures.tsv")).size() == 1);

  SUBCASE("thread count does not change the output") {
    const auto serial = tmp.path / "serial";
    CHECK(run({"preprocess", "--structures", (kFixtures / "structures").string(), "--cath-list", kCath, "--out",
               serial.string()})
              .code == 0);
    CHECK(slurp(serial / "manifest.tsv") == slurp(out / "manifest.tsv"));
    for (const auto& e : m.entries) CHECK(slurp(serial / (e.domain_id + ".fmap")) == slurp(out / (e.domain_id + ".fmap")));
  }
  SUBCASE("distance only") {
    const auto d = tmp.path / "dist";
    CHECK(run({"preprocess", "--structures", (kFixtures / "structures").string(), "--cath-list", kCath, "--out",
               d.string(), "--distance-only", "--selection", "ca"})
              .code == 0);
    const MapStack s = read_stack_file(d / "1abcA01.fmap");
    CHECK(s.distance_only);
    CHECK(s.selection == Selection::CA);
    CHECK(std::equal(s.channel(Channel::Dist).begin(), s.channel(Channel::Dist).end(), s.channel(Channel::Nb).begin()));
  }
}

TEST_CASE("preprocess skips a corrupt structure") {
  TempDir tmp("mixed");
  const Run r = run({"preprocess", "--structures", (kFixtures / "mixed").string(), "--cath-list", kCath, "--out",
                     tmp.path.string()});
  CHECK(r.code == 0);
  CHECK(r.out == "preprocessed\t4\tfailed\t1\n");
  CHECK(r.err.find("5pqrA01") != std::string::npos);
  const auto failures = rows(slurp(tmp.path / "failures.tsv"));
  REQUIRE(failures.size() == 2);
  CHECK(cells(failures[1])[0] == "5pqrA01");
  CHECK(cells(failures[1])[1] == "MalformedLine");
  CHECK(read_manifest(tmp.path / "manifest.tsv").entries.size() == 4);
}

TEST_CASE("exit codes") {
  TempDir tmp("codes");
  CHECK(run({"preprocess", "--structures", "/nonexistent", "--cath-list", kCath, "--out", tmp.path.string()}).code == 2);
  CHECK(run({"preprocess", "--structures", (kFixtures / "structures").string(), "--cath-list", kCath, "--out",
             tmp.path.string(), "--selection", "sidechain"})
            .code == 4);
  CHECK(run({"preprocess"}).code == 4);
  CHECK(run({"frobnicate"}).code == 4);
  CHECK(run({}).code == 4);
  CHECK(run({"--help"}).code == 0);
  CHECK(run({"predict", "--model", "/nonexistent.ckpt", "--manifest", "/nonexistent.tsv"}).code == 2);
  {
    std::ofstream bad(tmp.path / "bad.ckpt");
    bad << "not a checkpoint";
  }
  {
    std::ofstream m(tmp.path / "m.tsv");
    m << "#empty\n";
  }
  CHECK(run({"predict", "--model", (tmp.path / "bad.ckpt").string(), "--manifest", (tmp.path / "m.tsv").string()}).code ==
        3);
  {
    std::ofstream m(tmp.path / "bad.tsv");
    m << "x\ty\t1\n";
  }
  CHECK(run({"split", "--manifest", (tmp.path / "bad.tsv").string(), "--out", (tmp.path / "s").string()}).code == 3);
}

TEST_CASE("split, train, predict and evaluate on the fixtures") {
  TempDir tmp("flow");
  const auto stacks = tmp.path / "stacks";
  REQUIRE(run({"preprocess", "--structures", (kFixtures / "structures").string(), "--cath-list", kCath, "--out",
               stacks.string(), "--selection", "ca"})
              .code == 0);

  const Run s = run({"--seed", "4", "split", "--manifest", (stacks / "manifest.tsv").string(), "--out",
                     (tmp.path / "split").string()});
  REQUIRE(s.code == 0);
  CHECK(s.out == "train\t1\nval\t1\ntest\t1\nlr\t1\nnmr\t1\n");
  const Manifest test_set = read_manifest(tmp.path / "split" / "test.tsv");
  REQUIRE(test_set.entries.size() == 1);
  CHECK(fs::exists(test_set.resolve(test_set.entries[0])));

  const auto ckpt = tmp.path / "model" / "m.ckpt";
  const std::string all = (stacks / "manifest.tsv").string();
  const Run t = run({"--seed", "2", "train", "--train", all, "--val", all, "--out", ckpt.string(), "--epochs", "2",
                     "--batch-size", "2"});
  REQUIRE(t.code == 0);
  CHECK(t.out.rfind("epochs\t2\n", 0) == 0);
  CHECK(rows(slurp(ckpt.string() + ".history.tsv")).size() == 3);
  const Model model = load_checkpoint(ckpt);
  CHECK(model.config().head_sizes == std::array<int, kTaskCount>{2, 2, 2, 3});
  CHECK(nlohmann::json::parse(slurp(ckpt.string() + ".run.json"))["seed"] == 2);

  const auto preds = tmp.path / "pred.tsv";
  REQUIRE(run({"predict", "--model", ckpt.string(), "--manifest", all, "--out", preds.string()}).code == 0);
  const auto pred_rows = rows(slurp(preds));
  REQUIRE(pred_rows.size() == 6);
  CHECK(cells(pred_rows[0]).size() == 9);

  // Self-consistency: accuracy recomputed from the prediction table matches the evaluator.
  const Manifest m = read_manifest(all);
  std::map<std::string, CathLabel> truth;
  for (const auto& e : m.entries) truth[e.domain_id] = e.cath;
  int hits_c = 0;
  for (std::size_t i = 1; i < pred_rows.size(); ++i) {
    const auto c = cells(pred_rows[i]);
    hits_c += std::to_string(truth.at(c[0]).c) == c[1];
  }
  const Run ev = run({"evaluate", "--model", ckpt.string(), "--test", "ALL=" + all, "--json"});
  REQUIRE(ev.code == 0);
  const auto j = nlohmann::json::parse(ev.out);
  CHECK(j[0]["instances"] == 5);
  CHECK(j[0]["tasks"]["C"]["accuracy"].get<double>() == doctest::Approx(hits_c / 5.0));
  CHECK(j[0]["tasks"]["C"]["homogeneity"].is_number());

  // Three resolution groups in one report.
  const auto split_dir = tmp.path / "split";
  const auto per_class = tmp.path / "per_class.tsv";
  const Run ev3 = run({"evaluate", "--model", ckpt.string(), "--test", "HR=" + (split_dir / "test.tsv").string(),
                       "--test", "LR=" + (split_dir / "lr.tsv").string(), "--test",
                       "NMR=" + (split_dir / "nmr.tsv").string(), "--per-class", per_class.string()});
  REQUIRE(ev3.code == 0);
  const auto report = rows(ev3.out);
  REQUIRE(report.size() == 4);
  CHECK(cells(report[0]).size() == 14);
  CHECK(cells(report[1])[0] == "HR");
  CHECK(cells(report[2])[0] == "LR");
  CHECK(cells(report[3])[0] == "NMR");
  CHECK(rows(slurp(per_class)).size() >= 2);

  // Ensemble of two copies agrees with the single model.
  {
    std::ofstream members(tmp.path / "members.txt");
    members << "model/m.ckpt\nmodel/m.ckpt\n";
  }
  const Run en = run({"ensemble", "--members", (tmp.path / "members.txt").string(), "--manifest", all});
  REQUIRE(en.code == 0);
  const auto en_rows = rows(en.out);
  REQUIRE(en_rows.size() == pred_rows.size());
  for (std::size_t i = 0; i < en_rows.size(); ++i) {
    const auto a = cells(en_rows[i]);
    const auto b = cells(pred_rows[i]);
    for (int k = 0; k < 5; ++k) CHECK(a[k] == b[k]);
  }
  CHECK(run({"evaluate", "--ensemble", (tmp.path / "members.txt").string(), "--test", "ALL=" + all}).code == 0);
  CHECK(run({"evaluate", "--test", "ALL=" + all}).code == 4);
  CHECK(run({"evaluate", "--model", ckpt.string(), "--test", "ALL"}).code == 4);

  const Run fp = run({"fingerprint", "--model", ckpt.string(), "--manifest", all});
  REQUIRE(fp.code == 0);
  const auto fp_rows = rows(fp.out);
  REQUIRE(fp_rows.size() == 6);
  const auto vec = cells(fp_rows[1])[1];
  CHECK(std::count(vec.begin(), vec.end(), ',') == 15);

  const auto centroids = tmp.path / "centroids.tsv";
  const Run cl = run({"cluster", "--model", ckpt.string(), "--set", "ALL=" + all, "--task", "C", "--out",
                      centroids.string()});
  REQUIRE(cl.code == 0);
  CHECK(cl.out.rfind("homogeneity\tALL\tC\t", 0) == 0);
  CHECK(rows(slurp(centroids)).size() == 3);
}
