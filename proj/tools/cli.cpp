#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "foldmap/dataset.hpp"
#include "foldmap/ensemble.hpp"
#include "foldmap/error.hpp"
#include "foldmap/eval.hpp"
#include "foldmap/model.hpp"
#include "foldmap/rng.hpp"
#include "foldmap/structure.hpp"

namespace foldmap {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::uint64_t default_seed() {
  if (const char* env = std::getenv("FOLDMAP_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw Error(ErrorKind::BadConfig, std::string("FOLDMAP_SEED is not an integer: '") + env + "'");
    }
  }
  return 0;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorKind::Io, "cannot create '" + path.string() + "'");
  f << text;
  if (!f) throw Error(ErrorKind::Io, "failed writing '" + path.string() + "'");
}

/// Writes `text` to `path`, or to `out` when no path was given.
void emit(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty()) {
    out << text;
  } else {
    write_text(path, text);
  }
}

void write_run_manifest(const fs::path& path, const std::string& command, const std::vector<std::string>& args,
                        std::uint64_t seed, json config, json inputs, json outputs) {
  json j;
  j["command"] = command;
  j["tool_version"] = kToolVersion;
  j["seed"] = seed;
  j["args"] = args;
  j["config"] = std::move(config);
  j["inputs"] = std::move(inputs);
  j["outputs"] = std::move(outputs);
  write_text(path, j.dump(2) + "\n");
}

struct LoadedSet {
  std::vector<MapStack> stacks;
  std::vector<CathLabel> labels;
};

LoadedSet load_set(const fs::path& manifest_path) {
  const Manifest m = read_manifest(manifest_path);
  LoadedSet s;
  for (const ManifestEntry& e : m.entries) {
    s.stacks.push_back(read_stack_file(m.resolve(e)));
    s.labels.push_back(e.cath);
  }
  return s;
}

std::vector<LabelIndices> encode_all(const Vocabulary& v, std::span<const CathLabel> labels) {
  std::vector<LabelIndices> out;
  out.reserve(labels.size());
  for (const auto& l : labels) out.push_back(v.encode(l));
  return out;
}

std::string label_of(const Vocabulary& v, Task t, std::size_t idx) { return format_key(v.key(t, idx), t); }

std::string predictions_tsv(const Vocabulary& vocab, std::span<const MapStack> stacks,
                            std::span<const std::array<std::size_t, kTaskCount>> predicted,
                            std::span<const std::array<double, kTaskCount>> confidence) {
  std::ostringstream out;
  out.precision(6);
  out << std::fixed;
  out << "domain_id\tC\tA\tT\tH\tp_C\tp_A\tp_T\tp_H\n";
  for (std::size_t i = 0; i < stacks.size(); ++i) {
    out << stacks[i].domain_id;
    for (Task t : kTasks) out << '\t' << label_of(vocab, t, predicted[i][index_of(t)]);
    for (double c : confidence[i]) out << '\t' << c;
    out << '\n';
  }
  return out.str();
}

// A predictor is a single model or an ensemble; both reduce to per-task indices and probabilities.
struct Predictor {
  std::optional<Model> model;
  std::optional<Ensemble> ensemble;

  const Vocabulary& vocabulary() const { return model ? model->vocabulary() : ensemble->vocabulary(); }
  std::array<int, kTaskCount> head_sizes() const {
    return model ? model->config().head_sizes : ensemble->head_sizes();
  }

  void run(std::span<const MapStack> stacks, std::vector<std::array<std::size_t, kTaskCount>>& predicted,
           std::vector<std::array<double, kTaskCount>>& confidence, Points* fingerprints) const {
    predicted.clear();
    confidence.clear();
    if (model) {
      for (const Prediction& p : model->predict(stacks)) {
        std::array<std::size_t, kTaskCount> idx{};
        std::array<double, kTaskCount> conf{};
        for (Task t : kTasks) {
          idx[index_of(t)] = p.predicted(t);
          conf[index_of(t)] = p.probabilities[index_of(t)][idx[index_of(t)]];
        }
        predicted.push_back(idx);
        confidence.push_back(conf);
        if (fingerprints) fingerprints->push_back(p.fingerprint);
      }
      return;
    }
    for (const EnsemblePrediction& p : ensemble->predict(stacks)) {
      std::array<double, kTaskCount> conf{};
      for (Task t : kTasks) conf[index_of(t)] = p.probabilities[index_of(t)][p.predicted[index_of(t)]];
      predicted.push_back(p.predicted);
      confidence.push_back(conf);
    }
  }
};

Predictor load_predictor(const std::string& model_path, const std::string& ensemble_path) {
  Predictor p;
  if (!model_path.empty() == !ensemble_path.empty()) {
    throw Error(ErrorKind::BadConfig, "give exactly one of --model or --ensemble");
  }
  if (!model_path.empty()) {
    p.model = load_checkpoint(model_path);
  } else {
    const auto paths = read_ensemble_manifest(ensemble_path);
    p.ensemble = build_ensemble(paths);
  }
  return p;
}

std::pair<std::string, std::string> split_named(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size()) {
    throw Error(ErrorKind::BadConfig, "expected NAME=PATH, got '" + spec + "'");
  }
  return {spec.substr(0, eq), spec.substr(eq + 1)};
}

// ---------------------------------------------------------------------------

struct PreprocessArgs {
  std::string structures, cath_list, selection = "bb", out;
  bool distance_only = false;
  double anm_cutoff = AnmParams{}.cutoff;
  int jobs = 1;
};

int cmd_preprocess(const PreprocessArgs& a, const std::vector<std::string>& argv, std::uint64_t seed,
                   std::ostream& out, std::ostream& err) {
  const Selection sel = parse_selection(a.selection);
  if (a.jobs < 1) throw Error(ErrorKind::BadConfig, "--jobs must be at least 1");
  if (!(a.anm_cutoff > 0.0)) throw Error(ErrorKind::BadConfig, "--anm-cutoff must be positive");
  AnmParams anm;
  anm.cutoff = a.anm_cutoff;

  std::map<std::string, DomainRecord> records;
  for (auto& r : parse_cath_list(read_text_file(a.cath_list))) records.emplace(r.domain_id, r);

  if (!fs::is_directory(a.structures)) throw Error(ErrorKind::Io, "'" + a.structures + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(a.structures)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".pqr" || ext == ".pdb") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  fs::create_directories(a.out);

  struct Outcome {
    std::optional<ManifestEntry> entry;
    std::string id;
    std::optional<ErrorKind> kind;
    std::string message;
  };
  std::vector<Outcome> outcomes(files.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < files.size(); i = next++) {
      Outcome& o = outcomes[i];
      o.id = files[i].stem().string();
      try {
        const auto rec = records.find(o.id);
        if (rec == records.end()) throw Error(ErrorKind::Io, "not listed in the CATH list");
        const DomainStructure s = load_structure(files[i]);
        const MapStack stack = a.distance_only ? distance_only_stack(s, sel) : build_map_stack(s, sel, anm);
        const std::string name = o.id + ".fmap";
        write_stack_file(stack, fs::path(a.out) / name);
        o.entry = ManifestEntry{o.id, name, rec->second.cath, rec->second.group(), stack.source_atom_count};
      } catch (const Error& e) {
        o.kind = e.kind();
        o.message = e.what();
      } catch (const std::exception& e) {
        o.kind = ErrorKind::Io;
        o.message = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  const int n_threads = std::min<int>(a.jobs, static_cast<int>(std::max<std::size_t>(files.size(), 1)));
  for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::vector<ManifestEntry> entries;
  std::ostringstream failures;
  failures << "domain_id\terror\tmessage\n";
  std::size_t failed = 0;
  std::optional<ErrorKind> first_failure;
  for (const Outcome& o : outcomes) {
    if (o.entry) {
      entries.push_back(*o.entry);
      continue;
    }
    ++failed;
    if (!first_failure) first_failure = o.kind;
    err << "skipped " << o.id << ": " << o.message << '\n';
    failures << o.id << '\t' << to_string(*o.kind) << '\t' << o.message << '\n';
  }
  write_manifest(fs::path(a.out) / "manifest.tsv", entries);
  write_text(fs::path(a.out) / "failures.tsv", failures.str());

  json cfg;
  cfg["selection"] = selection_name(sel);
  cfg["distance_only"] = a.distance_only;
  cfg["anm_cutoff"] = a.anm_cutoff;
  cfg["jobs"] = a.jobs;
  write_run_manifest(fs::path(a.out) / "run.json", "preprocess", argv, seed, cfg,
                     json{{"structures", a.structures}, {"cath_list", a.cath_list}},
                     json{{"manifest", (fs::path(a.out) / "manifest.tsv").string()}});

  out << "preprocessed\t" << entries.size() << "\tfailed\t" << failed << '\n';
  if (entries.empty()) return first_failure ? static_cast<int>(classify(*first_failure)) : static_cast<int>(ErrorClass::Io);
  return 0;
}

// ---------------------------------------------------------------------------

struct SplitArgs {
  std::string manifest, out;
  double test = SplitSpec{}.test_fraction;
  double val = SplitSpec{}.validation_fraction;
};

int cmd_split(const SplitArgs& a, const std::vector<std::string>& argv, std::uint64_t seed, std::ostream& out) {
  const Manifest m = read_manifest(a.manifest);
  const fs::path out_dir = a.out;
  fs::create_directories(out_dir);
  const fs::path out_abs = fs::absolute(out_dir).lexically_normal();
  const auto rebase = [&](ManifestEntry e) {
    e.path = fs::absolute(m.resolve(e)).lexically_normal().lexically_relative(out_abs).generic_string();
    return e;
  };

  std::map<std::string, ManifestEntry> hr;
  std::vector<ManifestEntry> lr, nmr;
  for (const ManifestEntry& e : m.entries) {
    switch (e.group) {
      case ResolutionGroup::HR: hr.emplace(e.domain_id, rebase(e)); break;
      case ResolutionGroup::LR: lr.push_back(rebase(e)); break;
      case ResolutionGroup::NMR: nmr.push_back(rebase(e)); break;
    }
  }
  std::vector<std::string> ids;
  for (const auto& e : m.entries) {
    if (e.group == ResolutionGroup::HR) ids.push_back(e.domain_id);
  }
  SplitSpec spec;
  spec.test_fraction = a.test;
  spec.validation_fraction = a.val;
  spec.seed = seed;
  const SplitResult<std::string> parts = split(ids, spec);
  const auto collect = [&](const std::vector<std::string>& part) {
    std::vector<ManifestEntry> v;
    for (const auto& id : part) v.push_back(hr.at(id));
    return v;
  };
  write_manifest(out_dir / "train.tsv", collect(parts.train));
  write_manifest(out_dir / "val.tsv", collect(parts.validation));
  write_manifest(out_dir / "test.tsv", collect(parts.test));
  write_manifest(out_dir / "lr.tsv", lr);
  write_manifest(out_dir / "nmr.tsv", nmr);

  json cfg;
  cfg["test_fraction"] = a.test;
  cfg["val_fraction"] = a.val;
  write_run_manifest(out_dir / "run.json", "split", argv, seed, cfg, json{{"manifest", a.manifest}},
                     json{{"dir", a.out}});
  out << "train\t" << parts.train.size() << "\nval\t" << parts.validation.size() << "\ntest\t" << parts.test.size()
      << "\nlr\t" << lr.size() << "\nnmr\t" << nmr.size() << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string train, val, out, history, arch = "tiny";
  int epochs = TrainConfig{}.max_epochs;
  int batch_size = TrainConfig{}.batch_size;
  double lr = TrainConfig{}.initial_lr;
  bool distance_only_input = false;
};

int cmd_train(const TrainArgs& a, const std::vector<std::string>& argv, std::uint64_t seed, std::ostream& out) {
  const LoadedSet tr = load_set(a.train);
  const LoadedSet va = load_set(a.val);
  std::vector<CathLabel> all = tr.labels;
  all.insert(all.end(), va.labels.begin(), va.labels.end());
  Vocabulary vocab = build_vocabulary(all);

  std::array<int, kTaskCount> heads{};
  for (Task t : kTasks) heads[index_of(t)] = static_cast<int>(std::max<std::size_t>(vocab.size(t), 1));
  ModelConfig mc;
  if (a.arch == "tiny") {
    mc = ModelConfig::tiny(heads);
  } else if (a.arch == "reference") {
    mc = ModelConfig::reference(heads);
  } else {
    throw Error(ErrorKind::BadConfig, "unknown --arch '" + a.arch + "'");
  }
  mc.distance_only_input = a.distance_only_input;

  TrainConfig tc;
  tc.max_epochs = a.epochs;
  tc.batch_size = a.batch_size;
  tc.initial_lr = a.lr;
  tc.min_lr = std::min(tc.min_lr, a.lr);
  tc.seed = seed;

  Model model(mc, derive_seed(seed, "init", 0));
  model.set_vocabulary(vocab);
  LabeledStacks train_set{tr.stacks, encode_all(vocab, tr.labels)};
  LabeledStacks val_set{va.stacks, encode_all(vocab, va.labels)};
  const TrainHistory history = train(model, train_set, val_set, tc);

  const fs::path ckpt = a.out;
  if (ckpt.has_parent_path()) fs::create_directories(ckpt.parent_path());
  save_checkpoint(model, ckpt);
  const std::string history_path = a.history.empty() ? a.out + ".history.tsv" : a.history;
  write_text(history_path, history.to_tsv());

  json cfg;
  cfg["arch"] = a.arch;
  cfg["model"] = json::parse(mc.to_json());
  cfg["train"] = json::parse(tc.to_json());
  write_run_manifest(a.out + ".run.json", "train", argv, seed, cfg, json{{"train", a.train}, {"val", a.val}},
                     json{{"checkpoint", a.out}, {"history", history_path}});

  const EpochRecord& last = history.epochs.back();
  out << "epochs\t" << history.epochs.size() << "\ntrain_loss\t" << last.train_loss << "\nval_loss\t" << last.val_loss
      << "\ntrain_acc_H\t" << last.train_accuracy[index_of(Task::H)] << "\nval_acc_H\t"
      << last.val_accuracy[index_of(Task::H)] << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct PredictArgs {
  std::string model, ensemble, manifest, out;
};

int cmd_predict(const PredictArgs& a, std::ostream& out) {
  const Predictor p = load_predictor(a.model, a.ensemble);
  const LoadedSet s = load_set(a.manifest);
  std::vector<std::array<std::size_t, kTaskCount>> predicted;
  std::vector<std::array<double, kTaskCount>> confidence;
  p.run(s.stacks, predicted, confidence, nullptr);
  emit(a.out, predictions_tsv(p.vocabulary(), s.stacks, predicted, confidence), out);
  return 0;
}

// ---------------------------------------------------------------------------

struct EvaluateArgs {
  std::string model, ensemble, out, per_class;
  std::vector<std::string> tests;
  bool as_json = false;
};

int cmd_evaluate(const EvaluateArgs& a, std::uint64_t seed, std::ostream& out) {
  if (a.tests.empty()) throw Error(ErrorKind::BadConfig, "at least one --test NAME=MANIFEST is required");
  const Predictor p = load_predictor(a.model, a.ensemble);
  const Vocabulary& vocab = p.vocabulary();
  std::vector<EvalReport> reports;
  for (const std::string& spec : a.tests) {
    const auto [name, path] = split_named(spec);
    const LoadedSet s = load_set(path);
    std::vector<std::array<std::size_t, kTaskCount>> predicted;
    std::vector<std::array<double, kTaskCount>> confidence;
    Points fps;
    p.run(s.stacks, predicted, confidence, p.model ? &fps : nullptr);
    const auto truth = encode_all(vocab, s.labels);
    EvalReport r = make_report(name, predicted, truth, p.head_sizes(), p.model ? &fps : nullptr, seed);
    for (Task t : kTasks) {
      for (std::size_t c = 0; c < vocab.size(t); ++c) r.class_names[index_of(t)].push_back(label_of(vocab, t, c));
    }
    reports.push_back(std::move(r));
  }
  emit(a.out, a.as_json ? reports_to_json(reports) : reports_to_tsv(reports), out);
  if (!a.per_class.empty()) {
    std::string text;
    for (const auto& r : reports) {
      const std::string table = per_class_to_tsv(r);
      text += text.empty() ? table : table.substr(table.find('\n') + 1);
    }
    write_text(a.per_class, text);
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct FingerprintArgs {
  std::string model, manifest, out;
};

int cmd_fingerprint(const FingerprintArgs& a, std::ostream& out) {
  const Model m = load_checkpoint(a.model);
  const LoadedSet s = load_set(a.manifest);
  std::ostringstream text;
  text.precision(9);
  text << "domain_id\tfingerprint\n";
  const auto preds = m.predict(s.stacks);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    text << s.stacks[i].domain_id << '\t';
    for (std::size_t d = 0; d < preds[i].fingerprint.size(); ++d) text << (d ? "," : "") << preds[i].fingerprint[d];
    text << '\n';
  }
  emit(a.out, text.str(), out);
  return 0;
}

// ---------------------------------------------------------------------------

struct ClusterArgs {
  std::string model, out, task = "H";
  std::vector<std::string> sets;
};

int cmd_cluster(const ClusterArgs& a, std::uint64_t seed, std::ostream& out) {
  if (a.sets.empty()) throw Error(ErrorKind::BadConfig, "at least one --set NAME=MANIFEST is required");
  const Task task = parse_task(a.task);
  const Model m = load_checkpoint(a.model);
  // Labels are indexed over every prefix seen in any set, so unseen training classes still get names.
  std::map<LabelKey, int> label_ids;
  std::vector<std::string> names;
  std::vector<FingerprintSet> sets;
  for (const std::string& spec : a.sets) {
    const auto [name, path] = split_named(spec);
    const LoadedSet s = load_set(path);
    FingerprintSet fs_set;
    fs_set.dataset = name;
    for (auto& p : m.predict(s.stacks)) fs_set.fingerprints.push_back(std::move(p.fingerprint));
    for (const CathLabel& l : s.labels) {
      const LabelKey key = l.key(task);
      auto [it, inserted] = label_ids.emplace(key, static_cast<int>(names.size()));
      if (inserted) names.push_back(format_key(key, task));
      fs_set.labels.push_back(it->second);
    }
    sets.push_back(std::move(fs_set));
  }
  const auto rows = export_centroids(sets, seed);
  emit(a.out, centroids_to_tsv(rows, names), out);
  std::ostringstream summary;
  summary.precision(6);
  summary << std::fixed;
  for (const FingerprintSet& s : sets) {
    summary << "homogeneity\t" << s.dataset << '\t' << task_name(task) << '\t'
            << fingerprint_homogeneity(s.fingerprints, s.labels, seed) << '\n';
  }
  if (!a.out.empty()) out << summary.str();
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"foldmap: protein structure maps, fold classification and evaluation", "foldmap"};
  app.require_subcommand(1);
  std::optional<std::uint64_t> seed_flag;
  app.add_option("--seed", seed_flag, "Master seed (default: FOLDMAP_SEED or 0)");

  PreprocessArgs pre;
  auto* c_pre = app.add_subcommand("preprocess", "Parse structures and write map stacks");
  c_pre->add_option("--structures", pre.structures, "Directory of .pqr/.pdb files")->required();
  c_pre->add_option("--cath-list", pre.cath_list, "CATH domain list")->required();
  c_pre->add_option("--selection", pre.selection, "ca | bb | heavy")->capture_default_str();
  c_pre->add_option("--out", pre.out, "Output directory")->required();
  c_pre->add_flag("--distance-only", pre.distance_only, "Replicate the distance map into all channels");
  c_pre->add_option("--anm-cutoff", pre.anm_cutoff, "ANM contact cutoff in angstrom")->capture_default_str();
  c_pre->add_option("--jobs", pre.jobs, "Worker threads")->capture_default_str();

  SplitArgs sp;
  auto* c_split = app.add_subcommand("split", "Split HR entries into train/val/test; list LR and NMR sets");
  c_split->add_option("--manifest", sp.manifest, "Stack manifest")->required();
  c_split->add_option("--out", sp.out, "Output directory")->required();
  c_split->add_option("--test", sp.test, "Test fraction")->capture_default_str();
  c_split->add_option("--val", sp.val, "Validation fraction of the remainder")->capture_default_str();

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train a model and write a checkpoint");
  c_train->add_option("--train", tr.train, "Training manifest")->required();
  c_train->add_option("--val", tr.val, "Validation manifest")->required();
  c_train->add_option("--out", tr.out, "Checkpoint path")->required();
  c_train->add_option("--history", tr.history, "History TSV (default: <out>.history.tsv)");
  c_train->add_option("--arch", tr.arch, "tiny | reference")->capture_default_str();
  c_train->add_option("--epochs", tr.epochs)->capture_default_str();
  c_train->add_option("--batch-size", tr.batch_size)->capture_default_str();
  c_train->add_option("--lr", tr.lr, "Initial learning rate")->capture_default_str();
  c_train->add_flag("--distance-only-input", tr.distance_only_input, "Feed the distance channel into all inputs");

  PredictArgs pr;
  auto* c_predict = app.add_subcommand("predict", "Predict labels with one model");
  c_predict->add_option("--model", pr.model, "Checkpoint")->required();
  c_predict->add_option("--manifest", pr.manifest, "Stack manifest")->required();
  c_predict->add_option("--out", pr.out, "Output TSV (default: stdout)");

  PredictArgs en;
  auto* c_ens = app.add_subcommand("ensemble", "Predict labels with an equal-weight ensemble");
  c_ens->add_option("--members", en.ensemble, "File listing member checkpoints")->required();
  c_ens->add_option("--manifest", en.manifest, "Stack manifest")->required();
  c_ens->add_option("--out", en.out, "Output TSV (default: stdout)");

  EvaluateArgs ev;
  auto* c_eval = app.add_subcommand("evaluate", "Score a model or ensemble on named test sets");
  c_eval->add_option("--model", ev.model, "Checkpoint");
  c_eval->add_option("--ensemble", ev.ensemble, "File listing member checkpoints");
  c_eval->add_option("--test", ev.tests, "NAME=MANIFEST, repeatable")->required();
  c_eval->add_flag("--json", ev.as_json, "Emit JSON instead of TSV");
  c_eval->add_option("--out", ev.out, "Report path (default: stdout)");
  c_eval->add_option("--per-class", ev.per_class, "Per-class precision/recall/F1 table");

  FingerprintArgs fp;
  auto* c_fp = app.add_subcommand("fingerprint", "Write fingerprint vectors");
  c_fp->add_option("--model", fp.model, "Checkpoint")->required();
  c_fp->add_option("--manifest", fp.manifest, "Stack manifest")->required();
  c_fp->add_option("--out", fp.out, "Output TSV (default: stdout)");

  ClusterArgs cl;
  auto* c_cluster = app.add_subcommand("cluster", "K-means centroids of fingerprints per set");
  c_cluster->add_option("--model", cl.model, "Checkpoint")->required();
  c_cluster->add_option("--set", cl.sets, "NAME=MANIFEST, repeatable")->required();
  c_cluster->add_option("--task", cl.task, "C | A | T | H")->capture_default_str();
  c_cluster->add_option("--out", cl.out, "Centroid TSV (default: stdout)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : static_cast<int>(ErrorClass::Config);
  }

  try {
    const std::uint64_t seed = seed_flag ? *seed_flag : default_seed();
    if (*c_pre) return cmd_preprocess(pre, args, seed, out, err);
    if (*c_split) return cmd_split(sp, args, seed, out);
    if (*c_train) return cmd_train(tr, args, seed, out);
    if (*c_predict) return cmd_predict(pr, out);
    if (*c_ens) return cmd_predict(en, out);
    if (*c_eval) return cmd_evaluate(ev, seed, out);
    if (*c_fp) return cmd_fingerprint(fp, out);
    if (*c_cluster) return cmd_cluster(cl, seed, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(e.error_class());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(ErrorClass::Io);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace foldmap
