// Command-line front end: data generation, training, sampling, checking,
// decomposition, evaluation, and manifest replay.
//
// Exit codes: 0 success, 1 domain failure (unsatisfied constraint, diverged
// training), 2 usage or I/O error.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cpcomposer.hpp"

namespace {

using nlohmann::json;

constexpr int kManifestSchema = 1;
constexpr int kStructureSchema = 1;

std::vector<std::size_t> parse_anchor_list(const std::string& s) {
  std::vector<std::size_t> out;
  if (s.empty()) return out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos) {
      throw cpc::PreconditionError("invalid anchor list '" + s + "' (expected e.g. 1,4)");
    }
    out.push_back(std::stoul(tok));
  }
  return out;
}

cpc::ConstraintPair load_constraint_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw cpc::Error("cannot open constraint file '" + path + "'");
  try {
    return cpc::parse_constraints(in);
  } catch (const cpc::ParseError& e) {
    throw cpc::ParseError(path + ": " + e.what(), e.line());
  }
}

/// Target constraint for an n-residue peptide from either a strategy string
/// or a constraint file. "none" selects the empty constraint.
struct TargetSpec {
  std::string strategy;
  std::string anchors;
  std::string constraint_file;

  bool given() const { return !strategy.empty() || !constraint_file.empty(); }

  cpc::ConstraintPair resolve(std::size_t n) const {
    if (!constraint_file.empty()) {
      if (!strategy.empty() && strategy != "custom") {
        throw cpc::PreconditionError("use either --strategy or --constraints, not both");
      }
      return load_constraint_file(constraint_file);
    }
    if (strategy.empty() || strategy == "none") return {};
    if (strategy == "custom") throw cpc::PreconditionError("--strategy custom needs --constraints FILE");
    try {
      return cpc::decompose_composite(strategy, parse_anchor_list(anchors), n);
    } catch (const cpc::PreconditionError& e) {
      throw cpc::PreconditionError(std::string(e.what()) +
                                   "\n  hint: strategies are stapled-d, stapled-e, head-to-tail, disulfide, bicycle;"
                                   " combine with '+', repeat with 'k*', anchors via --anchors 1,5 or name:1,5");
    }
  }
};

void add_target_options(CLI::App* cmd, TargetSpec& t) {
  cmd->add_option("--strategy", t.strategy, "Cyclization strategy, composite (A+B, 2*A), 'custom' or 'none'");
  cmd->add_option("--anchors", t.anchors, "Comma-separated anchor residues consumed by the strategy components");
  cmd->add_option("--constraints", t.constraint_file, "Constraint file (type/distance lines)");
}

std::string timestamp_utc() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Run manifest; written once before the work starts and again with timings
/// when it finishes.
class Manifest {
 public:
  Manifest(std::string path, const std::vector<std::string>& argv, std::string command)
      : path_(std::move(path)), start_(std::chrono::steady_clock::now()) {
    doc_["schema_version"] = kManifestSchema;
    doc_["command"] = std::move(command);
    doc_["argv"] = argv;
    doc_["schemas"] = {{"manifest", kManifestSchema},
                       {"structure", kStructureSchema},
                       {"checkpoint", cpc::kCheckpointSchema}};
    doc_["started_at"] = timestamp_utc();
    doc_["outputs"] = json::array();
    doc_["status"] = "running";
  }

  json& doc() { return doc_; }
  void output(const std::string& p) { doc_["outputs"].push_back(p); }
  void timing(const std::string& k, double seconds) { doc_["timings"][k] = seconds; }

  void write() const {
    if (path_.empty()) return;
    std::ofstream out(path_);
    if (!out) throw cpc::Error("cannot write manifest '" + path_ + "'");
    out << doc_.dump(2) << '\n';
  }

  void finish(const std::string& status) {
    doc_["status"] = status;
    timing("wall_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count());
    write();
  }

 private:
  std::string path_;
  json doc_;
  std::chrono::steady_clock::time_point start_;
};

std::string default_manifest(const std::string& manifest, const std::string& out) {
  return manifest.empty() ? out + ".manifest.json" : manifest;
}

// ---------------------------------------------------------------------------

struct GenDataArgs {
  std::size_t count = 100;
  int len_min = 8;
  int len_max = 16;
  std::uint64_t seed = 0;
  std::string out, manifest;
};

int cmd_gen_data(const GenDataArgs& a, const std::vector<std::string>& argv) {
  if (a.len_min < 4 || a.len_max > 25 || a.len_min > a.len_max) {
    throw cpc::PreconditionError("need 4 <= --len-min <= --len-max <= 25");
  }
  Manifest m(default_manifest(a.manifest, a.out), argv, "gen-data");
  m.doc()["seed"] = a.seed;
  m.doc()["config"] = {{"count", a.count}, {"len_min", a.len_min}, {"len_max", a.len_max}};
  m.output(a.out);
  m.write();
  std::mt19937_64 rng(a.seed);
  std::uniform_int_distribution<int> len(a.len_min, a.len_max);
  std::vector<cpc::GeometricGraph> graphs;
  for (std::size_t i = 0; i < a.count; ++i) {
    const int n = len(rng);
    graphs.push_back(cpc::generate_chain(n, rng()));
  }
  cpc::write_structures(a.out, graphs);
  m.finish("ok");
  std::cout << "wrote " << graphs.size() << " chains to " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string data, config, out, loss_log, manifest;
  std::vector<std::string> set;
  std::uint64_t seed = 0;
  std::size_t epochs = 0, batch_size = 0, max_steps = 0, workers = 1;
  double learning_rate = 0.0;
  bool quiet = false;
};

const std::set<std::string> kTrainKeys = {
    "latent_width", "hidden",      "layers",        "time_width",   "steps",     "geom_channels", "beta_start",
    "beta_end",     "rbf_min",     "rbf_max",       "rbf_channels", "rbf_gamma", "coord_scale",   "embed_radius",
    "init_seed",    "p_type_drop", "p_dist_drop",   "learning_rate", "weight_decay", "batch_size", "epochs",
    "max_steps",    "seed",        "workers"};

void resolve_train_config(const cpc::KeyValueConfig& kv, cpc::ModelConfig& mc, cpc::TrainConfig& tc) {
  kv.require_known(kTrainKeys);
  mc.latent_width = kv.get("latent_width", mc.latent_width);
  mc.hidden = kv.get("hidden", mc.hidden);
  mc.layers = kv.get("layers", mc.layers);
  mc.time_width = kv.get("time_width", mc.time_width);
  mc.steps = kv.get("steps", mc.steps);
  mc.geom_channels = kv.get("geom_channels", mc.geom_channels);
  mc.beta_start = kv.get("beta_start", mc.beta_start);
  mc.beta_end = kv.get("beta_end", mc.beta_end);
  mc.rbf.d_min = kv.get("rbf_min", mc.rbf.d_min);
  mc.rbf.d_max = kv.get("rbf_max", mc.rbf.d_max);
  mc.rbf.channels = kv.get("rbf_channels", mc.rbf.channels);
  mc.rbf.gamma = kv.get("rbf_gamma", mc.rbf.gamma);
  mc.coord_scale = kv.get("coord_scale", mc.coord_scale);
  mc.embed_radius = kv.get("embed_radius", mc.embed_radius);
  mc.init_seed = kv.get("init_seed", static_cast<std::size_t>(mc.init_seed));
  tc.p_type_drop = kv.get("p_type_drop", tc.p_type_drop);
  tc.p_dist_drop = kv.get("p_dist_drop", tc.p_dist_drop);
  tc.learning_rate = kv.get("learning_rate", tc.learning_rate);
  tc.weight_decay = kv.get("weight_decay", tc.weight_decay);
  tc.batch_size = kv.get("batch_size", tc.batch_size);
  tc.epochs = kv.get("epochs", tc.epochs);
  tc.max_steps = kv.get("max_steps", tc.max_steps);
  tc.seed = kv.get("seed", static_cast<std::size_t>(tc.seed));
  tc.workers = kv.get("workers", tc.workers);
}

json train_config_json(const cpc::TrainConfig& t) {
  return {{"p_type_drop", t.p_type_drop},     {"p_dist_drop", t.p_dist_drop}, {"learning_rate", t.learning_rate},
          {"weight_decay", t.weight_decay},   {"batch_size", t.batch_size},   {"epochs", t.epochs},
          {"max_steps", t.max_steps},         {"seed", t.seed}};
}

int cmd_train(const TrainArgs& a, const CLI::App& cmd, const std::vector<std::string>& argv) {
  cpc::KeyValueConfig kv;
  if (!a.config.empty()) kv = cpc::KeyValueConfig::load(a.config);
  for (const auto& s : a.set) {
    std::istringstream line(s);
    auto one = cpc::KeyValueConfig::parse(line);
    if (one.values().empty()) throw cpc::PreconditionError("--set expects key=value, got '" + s + "'");
    for (const auto& [k, v] : one.values()) kv.set(k, v);
  }
  // explicit flags win over the config file
  if (cmd.count("--seed")) kv.set("seed", std::to_string(a.seed));
  if (cmd.count("--epochs")) kv.set("epochs", std::to_string(a.epochs));
  if (cmd.count("--batch-size")) kv.set("batch_size", std::to_string(a.batch_size));
  if (cmd.count("--max-steps")) kv.set("max_steps", std::to_string(a.max_steps));
  if (cmd.count("--learning-rate")) {
    std::ostringstream os;
    os.precision(17);
    os << a.learning_rate;
    kv.set("learning_rate", os.str());
  }
  if (cmd.count("--workers")) kv.set("workers", std::to_string(a.workers));

  cpc::ModelConfig mc;
  cpc::TrainConfig tc;
  resolve_train_config(kv, mc, tc);
  tc.validate();

  const auto data = cpc::read_structures(a.data);
  const std::string loss_path = a.loss_log.empty() ? a.out + ".loss.tsv" : a.loss_log;
  Manifest m(default_manifest(a.manifest, a.out), argv, "train");
  m.doc()["seed"] = tc.seed;
  m.doc()["config"] = {{"model", cpc::to_json(mc)}, {"train", train_config_json(tc)}, {"workers", tc.workers},
                       {"data", a.data}, {"examples", data.size()}};
  m.output(a.out);
  m.output(loss_path);
  m.write();

  auto params = cpc::init_params(mc);
  const auto sched = cpc::DiffusionSchedule::for_model(mc);
  std::ofstream log(loss_path);
  if (!log) throw cpc::Error("cannot write loss log '" + loss_path + "'");
  log << "epoch\tsteps\tmean_loss\n";
  cpc::TrainCallbacks cb;
  cb.on_epoch = [&](const cpc::EpochStats& s) {
    log << s.epoch << '\t' << s.steps << '\t' << cpc::format_fixed(s.mean_loss, 6) << '\n';
    log.flush();
    if (!a.quiet) std::cerr << "epoch " << s.epoch << " steps " << s.steps << " loss " << cpc::format_fixed(s.mean_loss, 6) << "\n";
  };
  const auto t0 = std::chrono::steady_clock::now();
  try {
    cpc::train(params, data, tc, sched, cb);
  } catch (const cpc::NumericError&) {
    m.finish("diverged");
    throw;
  }
  m.timing("train_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  cpc::save_checkpoint(a.out, params, {{"train", train_config_json(tc)}, {"data", a.data}});
  m.doc()["parameters"] = cpc::count_params(params);
  m.finish("ok");
  std::cout << "wrote checkpoint " << a.out << " (" << cpc::count_params(params) << " parameters)\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct SampleArgs {
  std::string checkpoint, out, manifest, mode = "cfg";
  TargetSpec target;
  std::size_t length = 10, num = 5, workers = 1;
  double weight = 0.0, energy_scale = 10.0, energy_clip = 1.0;
  std::uint64_t seed = 0;
};

int cmd_sample(const SampleArgs& a, const std::vector<std::string>& argv) {
  if (a.length < 4 || a.length > 25) throw cpc::PreconditionError("--length must lie in [4, 25]");
  cpc::SampleRequest req;
  req.n_residues = a.length;
  req.target = a.target.resolve(a.length);
  req.guidance.mode = cpc::parse_guidance_mode(a.mode);
  req.guidance.weight = a.weight;
  req.guidance.energy_scale = a.energy_scale;
  req.guidance.energy_clip = a.energy_clip;
  auto params = cpc::load_checkpoint(a.checkpoint);

  Manifest m(default_manifest(a.manifest, a.out), argv, "sample");
  m.doc()["seed"] = a.seed;
  m.doc()["config"] = {{"checkpoint", a.checkpoint},
                       {"length", a.length},
                       {"num", a.num},
                       {"mode", a.mode},
                       {"guidance_weight", a.weight},
                       {"energy_scale", a.energy_scale},
                       {"energy_clip", a.energy_clip},
                       {"workers", a.workers},
                       {"strategy", a.target.strategy},
                       {"anchors", a.target.anchors},
                       {"constraints", a.target.constraint_file}};
  m.doc()["target"] = cpc::to_text(req.target);
  m.output(a.out);
  m.write();

  const auto sched = cpc::DiffusionSchedule::for_model(params.config);
  const auto t0 = std::chrono::steady_clock::now();
  auto graphs = cpc::sample_many(params, req, sched, a.num, a.seed, a.workers);
  m.timing("sample_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  cpc::write_structures(a.out, graphs);
  std::size_t pass = 0;
  for (const auto& g : graphs) pass += cpc::check_satisfaction(g, req.target).pass ? 1 : 0;
  m.doc()["satisfied"] = pass;
  m.finish("ok");
  std::cout << "wrote " << graphs.size() << " samples to " << a.out << " (" << pass << " satisfy the target at tol "
            << cpc::format_fixed(cpc::kDefaultTolerance, 3) << ")\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct CheckArgs {
  std::string structures, out, manifest;
  TargetSpec target;
  double tol = cpc::kDefaultTolerance;
};

int cmd_check(const CheckArgs& a, const std::vector<std::string>& argv) {
  if (!a.target.given()) throw cpc::PreconditionError("check needs --strategy or --constraints");
  if (!(a.tol >= 0.0)) throw cpc::PreconditionError("--tol must be non-negative");
  const auto graphs = cpc::read_structures(a.structures);
  Manifest m(a.manifest, argv, "check");
  m.doc()["config"] = {{"structures", a.structures}, {"tol", a.tol}, {"strategy", a.target.strategy},
                       {"anchors", a.target.anchors}, {"constraints", a.target.constraint_file}};
  if (!a.out.empty()) m.output(a.out);
  m.write();

  std::ostringstream report;
  std::size_t failed = 0;
  for (std::size_t k = 0; k < graphs.size(); ++k) {
    const auto c = a.target.resolve(graphs[k].n_peptide());
    const auto r = cpc::check_satisfaction(graphs[k], c, a.tol);
    report << "structure " << k << ": " << (r.pass ? "PASS" : "FAIL") << "\n";
    for (const auto& item : r.failures()) report << "  " << item.describe() << "\n";
    failed += r.pass ? 0 : 1;
  }
  report << (graphs.size() - failed) << "/" << graphs.size() << " structures satisfy the target at tol "
         << cpc::format_fixed(a.tol, 3) << "\n";
  std::cout << report.str();
  if (!a.out.empty()) {
    std::ofstream out(a.out);
    if (!out) throw cpc::Error("cannot write '" + a.out + "'");
    out << report.str();
  }
  m.doc()["failed"] = failed;
  m.finish(failed ? "unsatisfied" : "ok");
  return failed ? 1 : 0;
}

// ---------------------------------------------------------------------------

struct DecomposeArgs {
  std::string out, manifest;
  TargetSpec target;
  std::size_t length = 0;
};

int cmd_decompose(const DecomposeArgs& a, const std::vector<std::string>& argv) {
  if (a.target.strategy.empty()) throw cpc::PreconditionError("decompose needs --strategy");
  const auto c = a.target.resolve(a.length);
  Manifest m(a.manifest, argv, "decompose");
  m.doc()["config"] = {{"strategy", a.target.strategy}, {"anchors", a.target.anchors}, {"length", a.length}};
  if (!a.out.empty()) m.output(a.out);
  m.write();
  const std::string text = cpc::to_text(c);
  if (a.out.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(a.out);
    if (!out) throw cpc::Error("cannot write '" + a.out + "'");
    out << text;
  }
  m.finish("ok");
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string samples, reference, out, manifest;
  TargetSpec target;
  std::size_t per_target = 5, bins = cpc::kDihedralBins;
  double tol = cpc::kDefaultTolerance;
};

int cmd_eval(const EvalArgs& a, const std::vector<std::string>& argv) {
  if (!a.target.given()) throw cpc::PreconditionError("eval needs --strategy or --constraints");
  if (a.per_target == 0) throw cpc::PreconditionError("--samples-per-target must be positive");
  const auto samples = cpc::read_structures(a.samples);
  const auto reference = cpc::read_structures(a.reference);
  if (samples.empty()) throw cpc::PreconditionError("no samples in '" + a.samples + "'");
  if (reference.empty()) throw cpc::PreconditionError("no reference structures in '" + a.reference + "'");
  if (samples.size() % a.per_target != 0) {
    throw cpc::PreconditionError(std::to_string(samples.size()) + " samples do not split into groups of " +
                                 std::to_string(a.per_target));
  }
  Manifest m(default_manifest(a.manifest, a.out), argv, "eval");
  m.doc()["config"] = {{"samples", a.samples},       {"reference", a.reference}, {"samples_per_target", a.per_target},
                       {"tol", a.tol},               {"bins", a.bins},           {"strategy", a.target.strategy},
                       {"anchors", a.target.anchors}, {"constraints", a.target.constraint_file}};
  m.output(a.out);
  m.write();

  std::map<std::string, std::vector<cpc::GeometricGraph>> groups;
  std::map<std::string, cpc::ConstraintPair> targets;
  char id[32];
  for (std::size_t k = 0; k < samples.size(); ++k) {
    std::snprintf(id, sizeof id, "t%05zu", k / a.per_target);
    if (!targets.count(id)) targets[id] = a.target.resolve(samples[k].n_peptide());
    groups[id].push_back(samples[k]);
  }
  const auto r = cpc::evaluate(groups, targets, reference, a.tol, a.bins);

  json doc;
  doc["schema_version"] = 1;
  doc["metrics"] = {{"success_rate", cpc::format_fixed(r.success_rate, 6)},
                    {"aa_kl", cpc::format_fixed(r.aa_kl, 6)},
                    {"dihedral_kl", cpc::format_fixed(r.dihedral_kl, 6)}};
  std::string excluded;
  for (int t : r.excluded_types) excluded += cpc::type_code(t);
  doc["excluded_types"] = excluded;
  doc["side_chain_kl"] = "not computed: structures carry no side chains";
  json rows = json::array();
  for (const auto& t : r.targets) rows.push_back({{"id", t.id}, {"samples", t.samples}, {"passing", t.passing}});
  doc["targets"] = rows;
  std::ofstream out(a.out);
  if (!out) throw cpc::Error("cannot write '" + a.out + "'");
  out << doc.dump(2) << '\n';

  std::cout << "targets        " << r.targets.size() << "\n"
            << "success_rate   " << cpc::format_fixed(r.success_rate, 6) << "\n"
            << "aa_kl          " << cpc::format_fixed(r.aa_kl, 6) << (excluded.empty() ? "" : "  (excluding " + excluded + ")")
            << "\n"
            << "dihedral_kl    " << cpc::format_fixed(r.dihedral_kl, 6) << "\n"
            << "side_chain_kl  not computed\n";
  m.finish("ok");
  return 0;
}

// ---------------------------------------------------------------------------

int run(const std::vector<std::string>& argv);

int cmd_replay(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw cpc::Error("cannot open manifest '" + manifest_path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw cpc::Error("invalid manifest '" + manifest_path + "': " + e.what());
  }
  if (doc.value("schema_version", 0) != kManifestSchema) throw cpc::Error("unsupported manifest schema");
  auto argv = doc.at("argv").get<std::vector<std::string>>();
  if (argv.size() >= 2 && argv[1] == "replay-from-manifest") throw cpc::Error("manifest records a replay");
  return run(argv);
}

int run(const std::vector<std::string>& argv) {
  CLI::App app{"Constraint-composed generation of cyclic peptides at C-alpha resolution"};
  app.name(argv.empty() ? "cpcomposer" : argv[0]);
  app.require_subcommand(1);
  app.set_version_flag("--version", "cpcomposer 0.1.0");

  GenDataArgs gen;
  auto* c_gen = app.add_subcommand("gen-data", "Generate synthetic C-alpha chains");
  c_gen->add_option("--count", gen.count, "Number of chains")->capture_default_str();
  c_gen->add_option("--len-min", gen.len_min, "Minimum length")->capture_default_str();
  c_gen->add_option("--len-max", gen.len_max, "Maximum length")->capture_default_str();
  c_gen->add_option("--seed", gen.seed, "Random seed")->capture_default_str();
  c_gen->add_option("--out", gen.out, "Output structure file")->required();
  c_gen->add_option("--manifest", gen.manifest, "Manifest path (default: <out>.manifest.json)");

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train the denoiser");
  c_train->add_option("--data", tr.data, "Training structure file")->required();
  c_train->add_option("--config", tr.config, "key = value config file");
  c_train->add_option("--set", tr.set, "Override one config key (key=value); repeatable");
  c_train->add_option("--out", tr.out, "Output checkpoint")->required();
  c_train->add_option("--loss-log", tr.loss_log, "Per-epoch loss log (default: <out>.loss.tsv)");
  c_train->add_option("--manifest", tr.manifest, "Manifest path (default: <out>.manifest.json)");
  c_train->add_option("--seed", tr.seed, "Random seed");
  c_train->add_option("--epochs", tr.epochs, "Epochs");
  c_train->add_option("--batch-size", tr.batch_size, "Examples per optimizer step");
  c_train->add_option("--max-steps", tr.max_steps, "Stop after this many optimizer steps (0: no limit)");
  c_train->add_option("--learning-rate", tr.learning_rate, "AdamW learning rate");
  c_train->add_option("--workers", tr.workers, "Threads for per-example gradients");
  c_train->add_flag("--quiet", tr.quiet, "Do not print per-epoch losses");

  SampleArgs sa;
  auto* c_sample = app.add_subcommand("sample", "Sample peptides under a target constraint");
  c_sample->add_option("--checkpoint", sa.checkpoint, "Trained checkpoint")->required();
  add_target_options(c_sample, sa.target);
  c_sample->add_option("--length", sa.length, "Residues per peptide")->capture_default_str();
  c_sample->add_option("--guidance-weight", sa.weight, "Classifier-free guidance weight w")->capture_default_str();
  c_sample->add_option("--mode", sa.mode, "Guidance: cfg, energy or none")->capture_default_str();
  c_sample->add_option("--energy-scale", sa.energy_scale, "Energy-guidance scale")->capture_default_str();
  c_sample->add_option("--energy-clip", sa.energy_clip, "Energy gradient norm clip (0: off)")->capture_default_str();
  c_sample->add_option("--num", sa.num, "Number of samples")->capture_default_str();
  c_sample->add_option("--seed", sa.seed, "Random seed")->capture_default_str();
  c_sample->add_option("--workers", sa.workers, "Sampling threads")->capture_default_str();
  c_sample->add_option("--out", sa.out, "Output structure file")->required();
  c_sample->add_option("--manifest", sa.manifest, "Manifest path (default: <out>.manifest.json)");

  CheckArgs ch;
  auto* c_check = app.add_subcommand("check", "Check structures against a target; exit 0 iff all pass");
  c_check->add_option("--structures", ch.structures, "Structure file")->required();
  add_target_options(c_check, ch.target);
  c_check->add_option("--tol", ch.tol, "Distance tolerance in Angstrom")->capture_default_str();
  c_check->add_option("--out", ch.out, "Also write the report here");
  c_check->add_option("--manifest", ch.manifest, "Manifest path (none by default)");

  DecomposeArgs de;
  auto* c_dec = app.add_subcommand("decompose", "Print the unit constraints of a strategy");
  add_target_options(c_dec, de.target);
  c_dec->add_option("--length", de.length, "Peptide length")->required();
  c_dec->add_option("--out", de.out, "Write here instead of stdout");
  c_dec->add_option("--manifest", de.manifest, "Manifest path (none by default)");

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Success rate and distribution metrics");
  c_eval->add_option("--samples", ev.samples, "Sample structure file, grouped by target")->required();
  c_eval->add_option("--reference", ev.reference, "Reference structure file")->required();
  add_target_options(c_eval, ev.target);
  c_eval->add_option("--samples-per-target", ev.per_target, "Consecutive samples per target")->capture_default_str();
  c_eval->add_option("--tol", ev.tol, "Distance tolerance in Angstrom")->capture_default_str();
  c_eval->add_option("--bins", ev.bins, "Pseudo-dihedral histogram bins")->capture_default_str();
  c_eval->add_option("--out", ev.out, "JSON metric report")->required();
  c_eval->add_option("--manifest", ev.manifest, "Manifest path (default: <out>.manifest.json)");

  std::string replay_path;
  auto* c_replay = app.add_subcommand("replay-from-manifest", "Re-run the command recorded in a manifest");
  c_replay->add_option("manifest", replay_path, "Manifest file")->required();

  for (auto* sub : {c_gen, c_train, c_sample, c_check, c_dec, c_eval, c_replay}) sub->fallthrough(false);

  std::vector<std::string> rev(argv.rbegin(), argv.rend() - (argv.empty() ? 0 : 1));
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (c_gen->parsed()) return cmd_gen_data(gen, argv);
  if (c_train->parsed()) return cmd_train(tr, *c_train, argv);
  if (c_sample->parsed()) return cmd_sample(sa, argv);
  if (c_check->parsed()) return cmd_check(ch, argv);
  if (c_dec->parsed()) return cmd_decompose(de, argv);
  if (c_eval->parsed()) return cmd_eval(ev, argv);
  if (c_replay->parsed()) return cmd_replay(replay_path);
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  try {
    return run(args);
  } catch (const cpc::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const cpc::ParseError& e) {
    std::cerr << "error: line " << e.line() << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
