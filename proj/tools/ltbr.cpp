// Command-line front end: dataset generation, base-model and translation
// training, bank construction, evaluation, interpolation and sweeps.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error,
// 3 training aborted on a numerical failure (last good parameters saved).

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ltbr/base_models.hpp"
#include "ltbr/bridge.hpp"
#include "ltbr/config.hpp"
#include "ltbr/datasets.hpp"
#include "ltbr/image_io.hpp"
#include "ltbr/model_io.hpp"
#include "ltbr/transfer_eval.hpp"

namespace {

using namespace ltbr;

struct TrainingAborted {
  std::string reason;
};

// Declares one subcommand's settings uniformly: built-in default, optional
// config-file value, command-line flag, in ascending precedence.
class Options {
 public:
  explicit Options(CLI::App* sub) : sub_(sub) {
    sub_->add_option("--config", config_path_,
                     "key = value file supplying defaults; flags take precedence");
  }

  void add(const std::string& key, const std::string& def, const std::string& help,
           bool required = false) {
    defaults_.set(key, def);
    CLI::Option* o = sub_->add_option("--" + key, staged_[key], help);
    if (!def.empty()) o->default_str(def);
    if (required) {
      o->description(help + " [required]");
      required_.push_back(key);
    }
    opts_[key] = o;
  }

  void add_flag(const std::string& key, const std::string& help) {
    defaults_.set(key, "false");
    flag_opts_[key] = sub_->add_flag("--" + key, help);
  }

  KvConfig resolve() const {
    KvConfig r = defaults_;
    if (!config_path_.empty()) {
      KvConfig file = KvConfig::parse_file(config_path_);
      std::vector<std::string> allowed;
      for (const auto& kv : opts_) allowed.push_back(kv.first);
      for (const auto& kv : flag_opts_) allowed.push_back(kv.first);
      file.restrict_keys(allowed);
      for (const auto& kv : file.pairs()) r.set(kv.first, kv.second);
    }
    for (const auto& [key, opt] : opts_)
      if (opt->count() > 0) r.set(key, staged_.at(key));
    for (const auto& [key, opt] : flag_opts_)
      if (opt->count() > 0) r.set(key, "true");
    for (const auto& key : required_)
      if (r.get_str(key).empty())
        fail(Err::ConfigError, "missing required option --" + key);
    return r;
  }

  void echo(const KvConfig& r) const {
    std::cout << "[" << sub_->get_name() << " config]\n" << r.render();
  }

 private:
  CLI::App* sub_;
  std::string config_path_;
  KvConfig defaults_;
  std::map<std::string, std::string> staged_;
  std::map<std::string, CLI::Option*> opts_;
  std::map<std::string, CLI::Option*> flag_opts_;
  std::vector<std::string> required_;
};

std::vector<int> parse_int_list(const std::string& s, const std::string& what) {
  std::vector<int> out;
  std::istringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::string t = ltbr::detail::trim(item);
    std::size_t used = 0;
    long long x = 0;
    try {
      x = std::stoll(t, &used);
    } catch (...) {
      fail(Err::ConfigError, what + " has a bad list item: '" + t + "'");
    }
    if (used != t.size()) fail(Err::ConfigError, what + " has a bad list item: '" + t + "'");
    out.push_back(static_cast<int>(x));
  }
  if (out.empty()) fail(Err::ConfigError, what + " is an empty list");
  return out;
}

int domain_arg(const KvConfig& r, const std::string& key) {
  long long d = r.get_int(key);
  if (d < 0 || d >= kNumDomains) fail(Err::ConfigError, "--" + key + " must be 0 or 1");
  return static_cast<int>(d);
}

void apply_mapping(LatentBank& bank, const ClassMapping& mapping) {
  if (mapping.kind() == MappingKind::Identity) return;
  for (int& l : bank.labels) l = mapping.apply(l);
}

Tensor bank_row(const LatentBank& bank, long long idx, const std::string& key) {
  if (idx < 0 || static_cast<std::size_t>(idx) >= bank.size())
    fail(Err::ConfigError, "--" + key + " is outside the bank (size " +
                               std::to_string(bank.size()) + ")");
  std::size_t d = bank.dim();
  std::vector<double> v(bank.vectors.raw() + static_cast<std::size_t>(idx) * d,
                        bank.vectors.raw() + (static_cast<std::size_t>(idx) + 1) * d);
  return Tensor({d}, std::move(v));
}

// ---- subcommand handlers ----

void run_gen_synthetic(const KvConfig& r) {
  SyntheticConfig sc = SyntheticConfig::defaults();
  sc.samples_per_class = static_cast<int>(r.get_int("samples-per-class"));
  sc.noise = r.get_double("noise");
  sc.seed = r.get_u64("seed");
  auto [d1, d2] = gen_synthetic_domains(sc);
  std::filesystem::path dir(r.get_str("out-dir"));
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  std::string p1 = (dir / "domain1.csv").string();
  std::string p2 = (dir / "domain2.csv").string();
  write_dataset_csv(d1, p1);
  write_dataset_csv(d2, p2);
  std::cout << "wrote " << p1 << " (" << d1.size() << " rows)\n";
  std::cout << "wrote " << p2 << " (" << d2.size() << " rows)\n";
  if (r.get_bool("emit-banks")) {
    std::string b1 = (dir / "bank1.ckpt").string();
    std::string b2 = (dir / "bank2.ckpt").string();
    save_latent_bank(b1, bank_from_dataset(d1));
    save_latent_bank(b2, bank_from_dataset(d2));
    std::cout << "wrote " << b1 << " (" << d1.size() << " vectors)\n";
    std::cout << "wrote " << b2 << " (" << d2.size() << " vectors)\n";
  }
}

void run_train_base(const KvConfig& r) {
  LabeledVectorDataset ds = read_dataset_csv(r.get_str("data"));
  BaseVaeConfig cfg;
  cfg.latent_dim = static_cast<int>(r.get_int("latent-dim"));
  cfg.hidden = r.get_size_list("hidden");
  cfg.epochs = static_cast<int>(r.get_int("epochs"));
  cfg.batch_size = static_cast<int>(r.get_int("batch-size"));
  cfg.lr = r.get_double("lr");
  cfg.beta = r.get_double("beta");
  cfg.x_sigma = r.get_double("x-sigma");
  Rng rng(r.get_u64("seed"));
  BaseVaeTrainResult res = train_base_vae(ds, cfg, rng);
  std::string trace = r.get_str("trace");
  if (!trace.empty()) {
    std::FILE* f = std::fopen(trace.c_str(), "wb");
    if (!f) fail(Err::IoError, "cannot open '" + trace + "' for writing");
    std::fprintf(f, "epoch,loss,recon,kl\n");
    for (const auto& e : res.trace)
      std::fprintf(f, "%d,%.17g,%.17g,%.17g\n", e.epoch, e.loss, e.recon, e.kl);
    if (std::fclose(f) != 0) fail(Err::IoError, "failed to finish writing '" + trace + "'");
    std::cout << "wrote " << trace << "\n";
  }
  std::string out = r.get_str("out");
  save_beta_vae(out, res.model);
  std::cout << "wrote " << out << "\n";
  if (!res.trace.empty())
    std::cout << "final epoch loss = " << res.trace.back().loss << "\n";
  if (res.aborted) throw TrainingAborted{res.abort_reason};
}

void run_train_classifier(const KvConfig& r) {
  LabeledVectorDataset ds = read_dataset_csv(r.get_str("data"));
  ClassifierConfig cfg;
  cfg.hidden = r.get_size_list("hidden");
  cfg.epochs = static_cast<int>(r.get_int("epochs"));
  cfg.batch_size = static_cast<int>(r.get_int("batch-size"));
  cfg.lr = r.get_double("lr");
  cfg.holdout_fraction = r.get_double("holdout");
  Rng rng(r.get_u64("seed"));
  ClassifierTrainResult res = train_data_classifier(ds, cfg, rng);
  std::string out = r.get_str("out");
  save_classifier(out, res.model);
  std::cout << "wrote " << out << "\n";
  std::cout << "best epoch = " << res.best_epoch << "\n";
  std::cout << "best holdout accuracy = " << res.best_accuracy << "\n";
  if (res.aborted) throw TrainingAborted{res.abort_reason};
}

void run_make_bank(const KvConfig& r) {
  std::string mode = r.get_str("mode");
  BetaVae vae = load_beta_vae(r.get_str("model"));
  ClassMapping mapping = ClassMapping::parse(r.get_str("mapping"));
  Rng rng(r.get_u64("seed"));
  LatentBank bank;
  if (mode == "encode") {
    std::string data = r.get_str("data");
    if (data.empty()) fail(Err::ConfigError, "--data is required when mode = encode");
    bank = build_latent_bank_encoded(vae, read_dataset_csv(data), rng);
  } else if (mode == "reject") {
    std::string clf_path = r.get_str("classifier");
    if (clf_path.empty()) fail(Err::ConfigError, "--classifier is required when mode = reject");
    DataClassifier clf = load_classifier(clf_path);
    RejectionReport rep;
    bank = build_latent_bank_rejection(vae, clf, r.get_double("threshold"),
                                       static_cast<std::size_t>(r.get_int("per-class")), rng,
                                       &rep);
    std::cout << "rejection attempts = " << rep.attempts << "\n";
    std::cout << "rejection acceptance rate = " << rep.acceptance_rate() << "\n";
  } else {
    fail(Err::ConfigError, "--mode must be encode or reject");
  }
  apply_mapping(bank, mapping);
  std::string out = r.get_str("out");
  save_latent_bank(out, bank);
  std::cout << "wrote " << out << " (" << bank.size() << " vectors)\n";
}

BridgeTrainConfig bridge_cfg_from(const KvConfig& r) {
  BridgeTrainConfig cfg;
  cfg.shared_dim = static_cast<int>(r.get_int("shared-dim"));
  cfg.hidden = r.get_size_list("hidden");
  cfg.weights.beta_kl = r.get_double("beta-kl");
  cfg.weights.beta_swd = r.get_double("beta-swd");
  cfg.weights.beta_cls = r.get_double("beta-cls");
  cfg.weights.sigma_likelihood = r.get_double("sigma-lik");
  cfg.num_projections = static_cast<int>(r.get_int("projections"));
  cfg.batch_size = static_cast<int>(r.get_int("batch-size"));
  cfg.total_steps = static_cast<int>(r.get_int("steps"));
  cfg.labels_per_class = static_cast<int>(r.get_int("labels-per-class"));
  cfg.conditional = !r.get_bool("unconditional");
  cfg.lr = r.get_double("lr");
  cfg.seed = r.get_u64("seed");
  return cfg;
}

void add_bridge_options(Options& o) {
  o.add("shared-dim", "8", "shared-space dimension");
  o.add("hidden", "64,64", "hidden layer widths, comma separated");
  o.add("beta-kl", "0.05", "posterior KL weight");
  o.add("beta-swd", "1", "sliced transport weight");
  o.add("beta-cls", "0.05", "class probe weight");
  o.add("sigma-lik", "1", "reconstruction likelihood sigma");
  o.add("projections", "50", "slicing directions per step");
  o.add("batch-size", "128", "rows per step and bank");
  o.add("steps", "2000", "training steps");
  o.add("labels-per-class", "-1", "labeled rows per class, -1 for all");
  o.add_flag("unconditional", "drop the domain indicator");
  o.add("lr", "0.001", "learning rate");
  o.add("seed", "1", "random seed");
}

void run_train_bridge(const KvConfig& r) {
  LatentBank b1 = load_latent_bank(r.get_str("bank1"));
  LatentBank b2 = load_latent_bank(r.get_str("bank2"));
  BridgeTrainConfig cfg = bridge_cfg_from(r);
  Rng rng(cfg.seed);
  BridgeTrainResult res = train_bridge(b1, b2, cfg, rng);
  std::string metrics = r.get_str("metrics");
  if (!metrics.empty()) {
    write_metrics_csv(metrics, res.trace);
    std::cout << "wrote " << metrics << "\n";
  }
  std::string out = r.get_str("out");
  save_bridge(out, res.model);
  std::cout << "wrote " << out << "\n";
  if (!res.trace.empty()) {
    const auto& last = res.trace.back();
    std::printf("final step %d total = %.17g\n", last.step, last.total);
  }
  if (res.aborted) throw TrainingAborted{res.abort_reason};
}

void run_transfer(const KvConfig& r) {
  BridgingVae m = load_bridge(r.get_str("bridge"));
  LatentBank src = load_latent_bank(r.get_str("bank"));
  int from = domain_arg(r, "from");
  int to = domain_arg(r, "to");
  LatentBank out_bank;
  out_bank.vectors = transfer_latents(m, src.vectors, from, to);
  out_bank.labels = src.labels;
  out_bank.num_classes = src.num_classes;
  out_bank.provenance = BankProvenance::RawVectors;
  std::string out = r.get_str("out");
  save_latent_bank(out, out_bank);
  std::cout << "wrote " << out << " (" << out_bank.size() << " vectors)\n";

  std::string pgm = r.get_str("pgm");
  if (!pgm.empty()) {
    std::string dec_path = r.get_str("decoder");
    if (dec_path.empty()) fail(Err::ConfigError, "--decoder is required with --pgm");
    BetaVae dec = load_beta_vae(dec_path);
    long long count = std::min<long long>(r.get_int("count"),
                                          static_cast<long long>(out_bank.size()));
    if (count <= 0) fail(Err::ConfigError, "--count must be positive");
    std::vector<std::size_t> idx(static_cast<std::size_t>(count));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Tensor decoded = vae_decode(dec, out_bank.gather(idx));
    write_pgm_grid(pgm, decoded, static_cast<std::size_t>(r.get_int("side")),
                   static_cast<std::size_t>(r.get_int("cols")));
    std::cout << "wrote " << pgm << "\n";
  }
}

void run_export_bank(const KvConfig& r) {
  LatentBank bank = load_latent_bank(r.get_str("bank"));
  LabeledVectorDataset ds;
  ds.vectors = bank.vectors;
  ds.labels = bank.labels;
  std::string out = r.get_str("out");
  write_dataset_csv(ds, out);
  std::cout << "wrote " << out << " (" << ds.size() << " rows)\n";
}

void run_eval(const KvConfig& r) {
  BridgingVae m = load_bridge(r.get_str("bridge"));
  LatentBank b1 = load_latent_bank(r.get_str("bank1"));
  LatentBank b2 = load_latent_bank(r.get_str("bank2"));
  std::vector<std::pair<std::string, double>> metrics;

  Tensor t12 = transfer_latents(m, b1.vectors, 0, 1);
  Tensor t21 = transfer_latents(m, b2.vectors, 1, 0);
  metrics.emplace_back("frechet2_1to2", frechet_distance2(t12, b2.vectors));
  metrics.emplace_back("frechet2_2to1", frechet_distance2(t21, b1.vectors));
  metrics.emplace_back("recon_mse_1", mean_sq_error(transfer_latents(m, b1.vectors, 0, 0),
                                                    b1.vectors));
  metrics.emplace_back("recon_mse_2", mean_sq_error(transfer_latents(m, b2.vectors, 1, 1),
                                                    b2.vectors));

  std::string lc2 = r.get_str("latent-classifier2");
  if (!lc2.empty())
    metrics.emplace_back("latent_accuracy_1to2",
                         accuracy(classifier_predict(load_classifier(lc2), t12), b1.labels));
  std::string lc1 = r.get_str("latent-classifier1");
  if (!lc1.empty())
    metrics.emplace_back("latent_accuracy_2to1",
                         accuracy(classifier_predict(load_classifier(lc1), t21), b2.labels));

  std::string v1 = r.get_str("vae1"), v2 = r.get_str("vae2");
  std::string d1 = r.get_str("data1"), d2 = r.get_str("data2");
  std::string c1 = r.get_str("classifier1"), c2 = r.get_str("classifier2");
  ClassMapping mapping = ClassMapping::parse(r.get_str("mapping"));
  auto need = [&](const std::string& v, const char* key, const char* why) {
    if (v.empty())
      fail(Err::ConfigError, std::string("--") + key + " is required for " + why);
  };
  if (!c2.empty() || !d1.empty()) {
    need(v1, "vae1", "data-space 1->2 accuracy");
    need(v2, "vae2", "data-space 1->2 accuracy");
    need(d1, "data1", "data-space 1->2 accuracy");
    need(c2, "classifier2", "data-space 1->2 accuracy");
    metrics.emplace_back(
        "data_accuracy_1to2",
        transfer_accuracy_data(load_beta_vae(v1), m, load_beta_vae(v2), read_dataset_csv(d1),
                               mapping, load_classifier(c2), 0, 1));
  }
  if (!c1.empty() || !d2.empty()) {
    need(v1, "vae1", "data-space 2->1 accuracy");
    need(v2, "vae2", "data-space 2->1 accuracy");
    need(d2, "data2", "data-space 2->1 accuracy");
    need(c1, "classifier1", "data-space 2->1 accuracy");
    metrics.emplace_back(
        "data_accuracy_2to1",
        transfer_accuracy_data(load_beta_vae(v2), m, load_beta_vae(v1), read_dataset_csv(d2),
                               mapping, load_classifier(c1), 1, 0));
  }

  std::string report;
  for (const auto& [k, v] : metrics) {
    char line[160];
    std::snprintf(line, sizeof line, "%s = %.17g\n", k.c_str(), v);
    report += line;
  }
  std::cout << report;
  std::string out = r.get_str("out");
  if (!out.empty()) {
    std::FILE* f = std::fopen(out.c_str(), "wb");
    if (!f) fail(Err::IoError, "cannot open '" + out + "' for writing");
    std::fwrite(report.data(), 1, report.size(), f);
    if (std::fclose(f) != 0) fail(Err::IoError, "failed to finish writing '" + out + "'");
    std::cout << "wrote " << out << "\n";
  }
}

void run_interpolate(const KvConfig& r) {
  BridgingVae m = load_bridge(r.get_str("bridge"));
  LatentBank bank = load_latent_bank(r.get_str("bank"));
  Tensor za = bank_row(bank, r.get_int("index-a"), "index-a");
  Tensor zb = bank_row(bank, r.get_int("index-b"), "index-b");
  long long steps = r.get_int("steps");
  if (steps < 2) fail(Err::ConfigError, "--steps must be at least 2");
  InterpolationResult res =
      interpolation_sweep(m, za, zb, domain_arg(r, "from"), domain_arg(r, "to"),
                          static_cast<std::size_t>(steps));
  std::string out = r.get_str("out");
  std::FILE* f = std::fopen(out.c_str(), "wb");
  if (!f) fail(Err::IoError, "cannot open '" + out + "' for writing");
  std::fprintf(f, "path,t");
  for (std::size_t j = 0; j < bank.dim(); ++j) std::fprintf(f, ",c%zu", j);
  std::fprintf(f, "\n");
  const char* names[3] = {"source", "shared", "target"};
  for (int row = 0; row < 3; ++row)
    for (std::size_t i = 0; i < res.ts.size(); ++i) {
      std::fprintf(f, "%s,%.17g", names[row], res.ts[i]);
      for (std::size_t j = 0; j < bank.dim(); ++j)
        std::fprintf(f, ",%.17g", res.rows[static_cast<std::size_t>(row)].at(i, j));
      std::fprintf(f, "\n");
    }
  if (std::fclose(f) != 0) fail(Err::IoError, "failed to finish writing '" + out + "'");
  std::cout << "wrote " << out << "\n";
}

void run_ablate(const KvConfig& r) {
  LatentBank b1 = load_latent_bank(r.get_str("bank1"));
  LatentBank b2 = load_latent_bank(r.get_str("bank2"));
  DataClassifier clf = load_classifier(r.get_str("classifier2"));
  BridgeTrainConfig cfg = bridge_cfg_from(r);
  auto outcomes = ablation_sweep(b1, b2, cfg, [&](const BridgingVae& m) {
    return transfer_accuracy(m, b1, 0, 1, clf);
  });
  std::string report;
  for (const auto& o : outcomes) {
    char line[160];
    std::snprintf(line, sizeof line, "%s = %.17g%s\n", o.name.c_str(), o.score,
                  o.result.aborted ? " (aborted)" : "");
    report += line;
  }
  std::cout << report;
  std::string out = r.get_str("out");
  if (!out.empty()) {
    std::FILE* f = std::fopen(out.c_str(), "wb");
    if (!f) fail(Err::IoError, "cannot open '" + out + "' for writing");
    std::fprintf(f, "variant,score,aborted\n");
    for (const auto& o : outcomes)
      std::fprintf(f, "%s,%.17g,%d\n", o.name.c_str(), o.score, o.result.aborted ? 1 : 0);
    if (std::fclose(f) != 0) fail(Err::IoError, "failed to finish writing '" + out + "'");
    std::cout << "wrote " << out << "\n";
  }
}

void run_sweep_labels(const KvConfig& r) {
  LatentBank b1 = load_latent_bank(r.get_str("bank1"));
  LatentBank b2 = load_latent_bank(r.get_str("bank2"));
  DataClassifier clf = load_classifier(r.get_str("classifier2"));
  BridgeTrainConfig cfg = bridge_cfg_from(r);
  std::vector<int> counts = parse_int_list(r.get_str("counts"), "--counts");
  auto points = data_efficiency_sweep(b1, b2, cfg, counts, [&](const BridgingVae& m) {
    return transfer_accuracy(m, b1, 0, 1, clf);
  });
  std::string report;
  for (const auto& p : points) {
    char line[160];
    std::snprintf(line, sizeof line, "labels %d = %.17g%s\n", p.labels_per_class, p.score,
                  p.result.aborted ? " (aborted)" : "");
    report += line;
  }
  std::cout << report;
  std::string out = r.get_str("out");
  if (!out.empty()) {
    std::FILE* f = std::fopen(out.c_str(), "wb");
    if (!f) fail(Err::IoError, "cannot open '" + out + "' for writing");
    std::fprintf(f, "labels_per_class,score,aborted\n");
    for (const auto& p : points)
      std::fprintf(f, "%d,%.17g,%d\n", p.labels_per_class, p.score, p.result.aborted ? 1 : 0);
    if (std::fclose(f) != 0) fail(Err::IoError, "failed to finish writing '" + out + "'");
    std::cout << "wrote " << out << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latent translation between pretrained generative models"};
  app.require_subcommand(1);

  using Handler = void (*)(const KvConfig&);
  std::vector<std::pair<Options*, Handler>> pending;
  std::vector<std::unique_ptr<Options>> owned;

  auto make = [&](const std::string& name, const std::string& help, Handler h) -> Options& {
    CLI::App* sub = app.add_subcommand(name, help);
    owned.push_back(std::make_unique<Options>(sub));
    Options& o = *owned.back();
    sub->callback([&o, h] {
      KvConfig r = o.resolve();
      o.echo(r);
      h(r);
    });
    return o;
  };

  {
    Options& o = make("gen-synthetic", "generate the paired two-domain arc dataset",
                      run_gen_synthetic);
    o.add("out-dir", "", "directory for domain1.csv and domain2.csv", true);
    o.add("samples-per-class", "500", "rows per class and domain");
    o.add("noise", "0.05", "isotropic noise level");
    o.add("seed", "1", "random seed");
    o.add_flag("emit-banks", "also write the points as latent banks (bank1.ckpt, bank2.ckpt)");
  }
  {
    Options& o = make("train-base", "train a variational autoencoder on a dataset",
                      run_train_base);
    o.add("data", "", "input dataset csv", true);
    o.add("out", "", "output model checkpoint", true);
    o.add("latent-dim", "8", "latent dimension");
    o.add("hidden", "64,64", "hidden layer widths, comma separated");
    o.add("epochs", "20", "training epochs");
    o.add("batch-size", "128", "rows per batch");
    o.add("lr", "0.001", "learning rate");
    o.add("beta", "1", "KL weight");
    o.add("x-sigma", "0.1", "reconstruction likelihood sigma");
    o.add("trace", "", "optional per-epoch loss csv");
    o.add("seed", "1", "random seed");
  }
  {
    Options& o = make("train-classifier", "train a class predictor on a dataset",
                      run_train_classifier);
    o.add("data", "", "input dataset csv", true);
    o.add("out", "", "output model checkpoint", true);
    o.add("hidden", "64,64", "hidden layer widths, comma separated");
    o.add("epochs", "20", "training epochs");
    o.add("batch-size", "128", "rows per batch");
    o.add("lr", "0.001", "learning rate");
    o.add("holdout", "0.1", "holdout fraction for epoch selection");
    o.add("seed", "1", "random seed");
  }
  {
    Options& o = make("make-bank", "build a labeled latent bank from a trained model",
                      run_make_bank);
    o.add("model", "", "autoencoder checkpoint", true);
    o.add("out", "", "output bank checkpoint", true);
    o.add("mode", "encode", "encode (posterior samples) or reject (prior sampling)");
    o.add("data", "", "dataset csv (encode mode)");
    o.add("classifier", "", "classifier checkpoint (reject mode)");
    o.add("threshold", "0.95", "confidence threshold (reject mode)");
    o.add("per-class", "100", "vectors per class (reject mode)");
    o.add("mapping", "identity", "class mapping: identity or digit_to_fashion");
    o.add("seed", "1", "random seed");
  }
  {
    Options& o = make("train-bridge", "train the translation layer over two banks",
                      run_train_bridge);
    o.add("bank1", "", "domain 1 bank checkpoint", true);
    o.add("bank2", "", "domain 2 bank checkpoint", true);
    o.add("out", "", "output model checkpoint", true);
    o.add("metrics", "", "optional per-step metrics csv");
    add_bridge_options(o);
  }
  {
    Options& o = make("transfer", "translate a bank between domains", run_transfer);
    o.add("bridge", "", "translation model checkpoint", true);
    o.add("bank", "", "source bank checkpoint", true);
    o.add("out", "", "output bank checkpoint", true);
    o.add("from", "0", "source domain (0 or 1)");
    o.add("to", "1", "target domain (0 or 1)");
    o.add("pgm", "", "optional decoded image grid (needs --decoder)");
    o.add("decoder", "", "target-domain autoencoder checkpoint for --pgm");
    o.add("count", "100", "images in the --pgm grid");
    o.add("side", "28", "image side length for --pgm");
    o.add("cols", "10", "grid columns for --pgm");
  }
  {
    Options& o = make("export-bank", "write a latent bank as a labeled csv", run_export_bank);
    o.add("bank", "", "bank checkpoint", true);
    o.add("out", "", "output csv", true);
  }
  {
    Options& o = make("eval", "score a translation model over two banks", run_eval);
    o.add("bridge", "", "translation model checkpoint", true);
    o.add("bank1", "", "domain 1 bank checkpoint", true);
    o.add("bank2", "", "domain 2 bank checkpoint", true);
    o.add("latent-classifier1", "", "latent-space domain 1 classifier for 2->1 accuracy");
    o.add("latent-classifier2", "", "latent-space domain 2 classifier for 1->2 accuracy");
    o.add("vae1", "", "domain 1 autoencoder (data-space accuracy)");
    o.add("vae2", "", "domain 2 autoencoder (data-space accuracy)");
    o.add("data1", "", "domain 1 dataset csv (data-space 1->2 accuracy)");
    o.add("data2", "", "domain 2 dataset csv (data-space 2->1 accuracy)");
    o.add("classifier1", "", "data-space domain 1 classifier (2->1 accuracy)");
    o.add("classifier2", "", "data-space domain 2 classifier (1->2 accuracy)");
    o.add("mapping", "identity", "class mapping applied to source labels");
    o.add("out", "", "optional metrics report file");
  }
  {
    Options& o = make("interpolate", "compare interpolation paths between two bank rows",
                      run_interpolate);
    o.add("bridge", "", "translation model checkpoint", true);
    o.add("bank", "", "source bank checkpoint", true);
    o.add("out", "", "output csv [path,t,coords...]", true);
    o.add("index-a", "0", "first bank row");
    o.add("index-b", "1", "second bank row");
    o.add("steps", "9", "points per path");
    o.add("from", "0", "source domain (0 or 1)");
    o.add("to", "1", "target domain (0 or 1)");
  }
  {
    Options& o = make("ablate", "train and score the standard variant set", run_ablate);
    o.add("bank1", "", "domain 1 bank checkpoint", true);
    o.add("bank2", "", "domain 2 bank checkpoint", true);
    o.add("classifier2", "", "domain 2 classifier checkpoint", true);
    o.add("out", "", "optional csv [variant,score,aborted]");
    add_bridge_options(o);
  }
  {
    Options& o = make("sweep-labels", "label-budget curve over per-class label counts",
                      run_sweep_labels);
    o.add("bank1", "", "domain 1 bank checkpoint", true);
    o.add("bank2", "", "domain 2 bank checkpoint", true);
    o.add("classifier2", "", "domain 2 classifier checkpoint", true);
    o.add("counts", "0,1,2,4,8,-1", "per-class label counts, ascending, -1 = all");
    o.add("out", "", "optional csv [labels_per_class,score,aborted]");
    add_bridge_options(o);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const TrainingAborted& e) {
    std::cerr << "training aborted: " << e.reason << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == Err::ConfigError ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
