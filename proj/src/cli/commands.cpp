#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "isap/cli.hpp"
#include "isap/errors.hpp"

namespace isap::cli {

namespace fs = std::filesystem;

namespace {

void guard_output(const fs::path& p, bool force) {
  if (fs::exists(p) && !force)
    throw ValidationError(p.string() + " exists; pass --force to overwrite");
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + p.string());
  out << text;
}

std::vector<model::ModelKind> kinds(const ExperimentConfig& cfg, const CommandOptions& opt) {
  if (opt.model) return {*opt.model};
  return cfg.models;
}

// The dataset must have been generated under the same data settings.
scene::LoadedDataset load_checked_dataset(const ExperimentConfig& cfg) {
  scene::LoadedDataset ds = scene::load_dataset(dataset_path(cfg));
  for (const auto& [k, v] : data_echo(cfg.data))
    if (io::lookup(ds.manifest.config, k) != v)
      throw ValidationError("dataset was generated with " + k + "=" +
                            io::lookup(ds.manifest.config, k) + ", config says " + v);
  return ds;
}

anchors::AnchorSet load_checked_anchors(const ExperimentConfig& cfg, const scene::LoadedDataset& ds) {
  io::Manifest m;
  anchors::AnchorSet set = anchors::load(anchors_path(cfg), &m);
  if (io::lookup(m.config, "input.dataset_hash") != io::hex64(ds.manifest.payload_hash))
    throw ValidationError("anchor set was fitted on a different dataset");
  if (set.size() != cfg.anchor_count)
    throw ValidationError("anchor set size differs from config anchors.count");
  return set;
}

double entropy(const std::vector<double>& p) {
  double h = 0.0;
  for (double x : p)
    if (x > 0) h -= x * std::log(x);
  return h;
}

std::string samples_csv(const Evaluation& ev) {
  std::ostringstream o;
  o << "domain,label,predicted,speed_heuristic,max_prob,categorical_entropy,alpha0,dirichlet_entropy,ensemble_score\n";
  auto emit = [&](const metrics::SamplePrediction& p) {
    o << (p.ood ? "ood" : "id") << "," << p.label << "," << p.predicted << ","
      << metrics::format_value(p.speed_heuristic) << ","
      << metrics::format_value(*std::max_element(p.probs.begin(), p.probs.end())) << ","
      << metrics::format_value(entropy(p.probs)) << ",";
    if (p.alpha) {
      o << metrics::format_value(metrics::alpha0(p)) << ","
        << metrics::format_value(evidential::dirichlet_entropy({*p.alpha}));
    } else {
      o << "--,--";
    }
    o << "," << (p.ensemble_score ? metrics::format_value(*p.ensemble_score) : std::string("--"))
      << "\n";
  };
  for (const auto& p : ev.id) emit(p);
  for (const auto& p : ev.ood) emit(p);
  return o.str();
}

struct SampleRow {
  bool ood;
  double speed;
  std::optional<double> alpha0;
};

std::vector<SampleRow> read_samples(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ValidationError("cannot open " + p.string());
  std::string line;
  std::getline(in, line);
  std::vector<SampleRow> rows;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    if (cells.size() < 7) throw ValidationError("malformed samples file " + p.string());
    SampleRow r{cells[0] == "ood", std::stod(cells[3]), std::nullopt};
    if (cells[6] != "--") r.alpha0 = std::stod(cells[6]);
    rows.push_back(r);
  }
  return rows;
}

}  // namespace

void cmd_gen_data(const ExperimentConfig& cfg, const CommandOptions& opt, std::ostream& out) {
  guard_output(dataset_path(cfg), opt.force);
  const std::vector<scene::Scene> scenes = scene::build_dataset(cfg.data);
  const scene::DatasetManifest m = scene::persist(scenes, dataset_path(cfg), echo(cfg));
  out << "dataset " << dataset_path(cfg).string() << " hash " << io::hex64(m.payload_hash) << "\n";
  std::size_t id = 0, ood = 0;
  for (scene::Split s : scene::kAllSplits) {
    const std::size_t n = m.counts[std::size_t(s)];
    (scene::is_ood(s) ? ood : id) += n;
    out << "  " << std::left << std::setw(9) << scene::to_string(s) << n << "\n";
  }
  out << "  ood fraction " << metrics::format_value(double(ood) / double(id + ood)) << "\n";
}

void cmd_fit_anchors(const ExperimentConfig& cfg, const CommandOptions& opt, std::ostream& out) {
  guard_output(anchors_path(cfg), opt.force);
  const scene::LoadedDataset ds = load_checked_dataset(cfg);
  std::vector<anchors::FutureTrack> futures;
  for (std::size_t i : scene::select(ds.scenes, scene::Split::train)) futures.push_back(ds.scenes[i].future);
  const anchors::AnchorSet set = anchors::fit_covering(futures, cfg.anchor_count, cfg.anchor_seed);
  io::KeyValues config = echo(cfg);
  config.emplace_back("input.dataset_hash", io::hex64(ds.manifest.payload_hash));
  anchors::save(set, anchors_path(cfg), config);
  const auto counts = anchors::label_counts(futures, set);
  out << "anchors " << anchors_path(cfg).string() << ": " << set.size() << " anchors, "
      << set.iterations << " iterations, "
      << std::count(counts.begin(), counts.end(), std::size_t{0}) << " unused classes\n";
}

void cmd_train(const ExperimentConfig& cfg, const CommandOptions& opt, std::ostream& out) {
  const scene::LoadedDataset ds = load_checked_dataset(cfg);
  const anchors::AnchorSet set = load_checked_anchors(cfg, ds);
  const std::vector<std::size_t> labels = label_scenes(ds.scenes, set);
  for (model::ModelKind kind : kinds(cfg, opt)) {
    for (std::uint64_t seed : cfg.seeds) {
      const fs::path path = checkpoint_path(cfg, kind, seed);
      guard_output(path, opt.force);
      model::ModelConfig net = cfg.net;
      net.kind = kind == model::ModelKind::ensemble ? model::ModelKind::covernet : kind;
      net.classes = set.size();
      model::TrainConfig tc = train_config_for(cfg, kind, seed);
      tc.verbose = opt.verbose;

      model::Checkpoint ck;
      ck.kind = kind;
      ck.anchor_hash = set.hash();
      std::ostringstream log;
      log << "member,epoch,train_loss,val_loss\n";
      const std::size_t members = kind == model::ModelKind::ensemble ? cfg.net.ensemble_size : 1;
      for (std::size_t m = 0; m < members; ++m) {
        model::TrainConfig mtc = tc;
        if (kind == model::ModelKind::ensemble) mtc.seed = derive_seed(seed, 0xE45E + m);
        model::TrainedModel tm = model::train_model(net, mtc, ds.scenes, labels);
        for (const model::EpochLog& e : tm.log)
          log << m << "," << e.epoch << "," << metrics::format_value(e.train_loss) << ","
              << metrics::format_value(e.val_loss) << "\n";
        ck.epoch = tm.selected_epoch;
        ck.members.push_back(std::move(tm.model));
        out << model::to_string(kind) << " seed " << seed;
        if (members > 1) out << " member " << m;
        out << ": selected epoch " << ck.epoch << "\n";
      }
      if (members > 1) ck.epoch = 0;
      ck.config = echo(cfg);
      model::ModelConfig resolved = ck.members[0]->config();
      resolved.kind = kind;
      for (auto& p : model::echo(resolved)) ck.config.push_back(p);
      ck.config.emplace_back("train.seed", std::to_string(seed));
      ck.config.emplace_back("train.select_best", tc.select_best ? "1" : "0");
      ck.config.emplace_back("train.effective_epochs", std::to_string(tc.epochs));
      ck.config.emplace_back("input.dataset_hash", io::hex64(ds.manifest.payload_hash));
      ck.config.emplace_back("input.anchor_hash", io::hex64(set.hash()));
      // echo(cfg) already lists model.* keys; drop the first copy.
      io::KeyValues dedup;
      for (auto it = ck.config.rbegin(); it != ck.config.rend(); ++it)
        if (std::none_of(dedup.begin(), dedup.end(), [&](const auto& p) { return p.first == it->first; }))
          dedup.push_back(*it);
      std::reverse(dedup.begin(), dedup.end());
      ck.config = std::move(dedup);
      model::save_checkpoint(ck, path);
      fs::path log_path = path;
      log_path.replace_extension(".log.csv");
      write_text(log_path, log.str());
    }
  }
}

void cmd_eval(const ExperimentConfig& cfg, const CommandOptions& opt, std::ostream& out) {
  const scene::LoadedDataset ds = load_checked_dataset(cfg);
  const anchors::AnchorSet set = load_checked_anchors(cfg, ds);
  for (model::ModelKind kind : kinds(cfg, opt)) {
    for (std::uint64_t seed : cfg.seeds) {
      const fs::path ck_path = checkpoint_path(cfg, kind, seed);
      if (!fs::exists(ck_path))
        throw ValidationError("missing checkpoint for " + std::string(model::to_string(kind)) +
                              " seed " + std::to_string(seed) + " (run train first)");
      model::Checkpoint ck = model::load_checkpoint(ck_path);
      if (ck.kind != kind) throw ValidationError(ck_path.string() + " holds a different model kind");
      if (io::lookup(ck.config, "input.dataset_hash") != io::hex64(ds.manifest.payload_hash))
        throw ValidationError(ck_path.string() + " was trained on a different dataset");
      Evaluation ev = evaluate(ck, ds.scenes, set);
      ev.report.header = ck.config;
      ev.report.header.emplace_back("input.checkpoint_hash",
                                    io::hex64(io::read_manifest(ck_path).payload_hash));
      std::ostringstream csv;
      metrics::write_csv(ev.report, csv);
      write_text(report_path(cfg, kind, seed), csv.str());
      write_text(samples_path(cfg, kind, seed), samples_csv(ev));
      out << model::to_string(kind) << " seed " << seed << ": minADE_1 "
          << metrics::format_value(ev.report.id("minADE_1")) << " ("
          << metrics::format_value(ev.report.ood("minADE_1")) << ")";
      if (const auto* r = ev.report.find("ood_epistemic_auroc"); r && r->id_value)
        out << ", OOD AUROC " << metrics::format_value(*r->id_value);
      out << "\n";
    }
  }
}

void cmd_report(const ExperimentConfig& cfg, const CommandOptions& opt, std::ostream& out) {
  struct Entry {
    std::string name;
    model::ModelKind kind;
    std::uint64_t seed;
    metrics::EvalReport report;
  };
  std::vector<Entry> entries;
  for (model::ModelKind kind : kinds(cfg, opt))
    for (std::uint64_t seed : cfg.seeds) {
      const fs::path p = report_path(cfg, kind, seed);
      if (!fs::exists(p))
        throw ValidationError("missing evaluation for " + std::string(model::to_string(kind)) +
                              " seed " + std::to_string(seed) + " (run eval first)");
      std::ifstream in(p);
      entries.push_back({std::string(model::to_string(kind)) + "_seed" + std::to_string(seed), kind,
                         seed, metrics::read_csv(in)});
    }

  static const std::vector<std::string> table1{"minADE_1", "minADE_5", "minADE_10", "minADE_15",
                                               "FDE", "conf_aleatoric_auroc", "conf_aleatoric_apr",
                                               "conf_epistemic_auroc", "conf_epistemic_apr", "ece",
                                               "brier"};
  static const std::vector<std::string> table2{"ood_aleatoric_auroc", "ood_aleatoric_apr",
                                               "ood_epistemic_auroc", "ood_epistemic_apr",
                                               "alpha0_mean", "alpha0_ratio",
                                               "dirichlet_entropy_mean"};
  auto cell = [](const std::optional<double>& v) {
    return v ? metrics::format_value(*v) : std::string("--");
  };
  std::ostringstream csv, txt;
  for (const auto& [k, v] : echo(cfg)) csv << "# " << k << "=" << v << "\n";
  csv << "table,metric,model,id_value,ood_value\n";
  for (const auto& [tname, metrics_list] :
       {std::pair{std::string("trajectory_and_calibration"), table1},
        std::pair{std::string("ood_detection"), table2}}) {
    txt << tname << "\n";
    txt << std::left << std::setw(26) << "metric";
    for (const Entry& e : entries) txt << std::setw(26) << e.name;
    txt << "\n";
    for (const std::string& m : metrics_list) {
      txt << std::left << std::setw(26) << m;
      for (const Entry& e : entries) {
        const metrics::ReportRow* r = e.report.find(m);
        std::optional<double> a, b;
        if (r) {
          a = r->id_value;
          b = r->ood_value;
        }
        csv << tname << "," << m << "," << e.name << "," << cell(a) << "," << cell(b) << "\n";
        std::string shown = cell(a);
        if (b) shown += " (" + cell(b) + ")";
        txt << std::setw(26) << shown;
      }
      txt << "\n";
    }
    txt << "\n";
  }
  write_text(cfg.out / "report" / "table.csv", csv.str());
  write_text(cfg.out / "report" / "table.txt", txt.str());

  // alpha0 against the speed heuristic for the evidential models.
  std::vector<Series> series;
  static const std::map<model::ModelKind, std::pair<std::string, std::string>> colors{
      {model::ModelKind::isap, {"#1f77b4", "#d62728"}},
      {model::ModelKind::postcovernet, {"#2ca02c", "#ff7f0e"}}};
  for (const Entry& e : entries) {
    if (!model::is_evidential(e.kind) || e.seed != cfg.seeds.front()) continue;
    Series id{std::string(model::to_string(e.kind)) + " ID", colors.at(e.kind).first, {}};
    Series ood{std::string(model::to_string(e.kind)) + " OOD", colors.at(e.kind).second, {}};
    for (const SampleRow& r : read_samples(samples_path(cfg, e.kind, e.seed)))
      if (r.alpha0) (r.ood ? ood : id).points.emplace_back(r.speed, *r.alpha0);
    series.push_back(std::move(id));
    series.push_back(std::move(ood));
  }
  write_text(cfg.out / "report" / "fig_alpha0_speed.svg",
             scatter_svg("alpha0 vs speed heuristic", "speed heuristic (m over 1 s)",
                         "alpha0 (log scale)", series, true, false));

  // Entropy histograms: Dirichlet entropy when available.
  std::vector<HistogramSeries> hist;
  double lo = 0, hi = 1;
  std::string which = "categorical";
  for (const Entry& e : entries) {
    if (e.seed != cfg.seeds.front()) continue;
    const std::string base = e.report.find("hist.dirichlet_entropy.lo") ? "hist.dirichlet_entropy"
                                                                        : "hist.categorical_entropy";
    if (!hist.empty() && e.kind != model::ModelKind::isap) continue;
    if (!e.report.find(base + ".lo")) continue;
    hist.clear();
    which = base == "hist.dirichlet_entropy" ? "Dirichlet" : "categorical";
    lo = e.report.id(base + ".lo");
    hi = e.report.id(base + ".hi");
    HistogramSeries id{e.name + " ID", "#1f77b4", {}}, ood{e.name + " OOD", "#d62728", {}};
    for (std::size_t b = 0; b < metrics::kEntropyBins; ++b) {
      char key[16];
      std::snprintf(key, sizeof key, "%02zu", b);
      id.counts.push_back(std::size_t(e.report.id(base + ".bin" + key)));
      ood.counts.push_back(std::size_t(e.report.ood(base + ".bin" + key)));
    }
    hist = {id, ood};
    if (e.kind == model::ModelKind::isap) break;
  }
  write_text(cfg.out / "report" / "fig_entropy.svg",
             histogram_svg(which + " entropy, ID vs OOD test", which + " entropy", lo, hi, hist));
  out << txt.str();
  out << "figures written to " << (cfg.out / "report").string() << "\n";
}

int run(int argc, char** argv) {
  CLI::App app{"ISAP evidential trajectory prediction toolkit"};
  app.require_subcommand(1);
  std::string config_path, experiment, out_dir, model_name;
  std::optional<std::uint64_t> seed;
  std::optional<double> scale;
  CommandOptions opt;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "experiment seed (data, anchors and the single model seed)");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--model", model_name, "covernet|postcovernet|isap|ensemble");
    sub->add_option("--experiment", experiment, "speed|map");
    sub->add_option("--scale", scale, "dataset scale factor");
    sub->add_flag("--force", opt.force, "overwrite existing outputs");
    sub->add_flag("-v,--verbose", opt.verbose, "per-epoch training progress");
  };
  auto* gen = app.add_subcommand("gen-data", "generate the split-tagged scene dataset");
  auto* fit = app.add_subcommand("fit-anchors", "fit the k-means anchor set");
  auto* train = app.add_subcommand("train", "train the configured model kinds");
  auto* eval = app.add_subcommand("eval", "evaluate checkpoints on the test splits");
  auto* report = app.add_subcommand("report", "render tables and figures");
  for (auto* s : {gen, fit, train, eval, report}) common(s);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    ExperimentConfig cfg = config_path.empty()
                               ? default_config(experiment.empty() ? scene::Experiment::speed
                                                                   : scene::parse_experiment(experiment))
                               : load_config(config_path);
    if (!experiment.empty()) cfg.data.experiment = scene::parse_experiment(experiment);
    if (scale) cfg.data.scale = *scale;
    if (seed) {
      cfg.data.seed = *seed;
      cfg.anchor_seed = *seed;
      cfg.seeds = {*seed};
    }
    if (!out_dir.empty()) cfg.out = out_dir;
    if (!model_name.empty()) opt.model = model::parse_model_kind(model_name);

    if (gen->parsed()) cmd_gen_data(cfg, opt, std::cout);
    else if (fit->parsed()) cmd_fit_anchors(cfg, opt, std::cout);
    else if (train->parsed()) cmd_train(cfg, opt, std::cout);
    else if (eval->parsed()) cmd_eval(cfg, opt, std::cout);
    else if (report->parsed()) cmd_report(cfg, opt, std::cout);
    return 0;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace isap::cli
