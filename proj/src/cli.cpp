// Copyright 2026 The DCP Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "dcp/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "dcp/config.hpp"
#include "dcp/errors.hpp"
#include "dcp/eval_bench.hpp"
#include "dcp/synth_data.hpp"
#include "dcp/trainer.hpp"

namespace dcp::cli {

namespace {

bool is_user_error(const std::exception& e) {
  return dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const InputError*>(&e) ||
         dynamic_cast<const ShapeError*>(&e) || dynamic_cast<const CapacityError*>(&e) ||
         dynamic_cast<const AssemblyError*>(&e) || dynamic_cast<const PairingError*>(&e) ||
         dynamic_cast<const ContractError*>(&e);
}

std::string keys_footer() {
  std::string s = "\nConfig keys (config file lines or --set key=value):\n";
  for (const auto& k : config_keys()) s += "  " + k.name + "  " + k.help + "\n";
  return s;
}

struct SpecOptions {
  std::string config_path;
  std::vector<std::string> sets;
};

void add_spec_options(CLI::App* app, SpecOptions& o) {
  app->add_option("-c,--config", o.config_path, "key = value config file");
  app->add_option("--set", o.sets, "override, key=value (repeatable)");
  app->footer(keys_footer());
}

// File first, then the convenience flags, then --set; later wins.
RunSpec build_spec(const SpecOptions& o,
                   const std::vector<std::pair<std::string, std::string>>& flags) {
  RunSpec spec = o.config_path.empty() ? RunSpec{} : load_config(o.config_path);
  for (const auto& [k, v] : flags) apply_override(spec, k, v);
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    apply_override(spec, kv.substr(0, eq), kv.substr(eq + 1));
  }
  spec.train.validate();
  return spec;
}

ReportFormat to_format(const std::string& s) {
  if (s == "json") return ReportFormat::json;
  if (s == "csv") return ReportFormat::csv;
  throw ConfigError("unknown report format '" + s + "'");
}

}  // namespace

int parse_and_dispatch(int argc, const char* const* argv, std::ostream& out,
                       std::ostream& err) {
  CLI::App app{"Dynamic class pool training harness"};
  app.require_subcommand(1);
  app.fallthrough();
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "suppress progress output");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic DCPD dataset");
  SynthConfig sc;
  std::string gen_out, gen_csv;
  double zipf = 0.0;
  gen->add_option("--n-id", sc.n_id, "identities")->capture_default_str();
  gen->add_option("--d-in", sc.d_in, "input dimension")->capture_default_str();
  gen->add_option("--k-min", sc.k_min, "min images per identity")->capture_default_str();
  gen->add_option("--k-max", sc.k_max, "max images per identity")->capture_default_str();
  gen->add_option("--noise", sc.noise_sigma, "within-class noise sigma")->capture_default_str();
  gen->add_option("--seed", sc.seed, "generator seed")->capture_default_str();
  gen->add_option("--zipf", zipf, "long-tail counts with this exponent (0: uniform)");
  gen->add_option("-o,--out", gen_out, "output DCPD file")->required();
  gen->add_option("--csv", gen_csv, "also export CSV here");

  // train
  auto* train = app.add_subcommand("train", "train with dcp, fc or partial-fc");
  SpecOptions train_spec;
  add_spec_options(train, train_spec);
  std::string t_method, t_pool_frac, t_k, t_epochs, t_seed, t_data, t_out;
  train->add_option("--method", t_method, "dcp | fc | partial-fc");
  train->add_option("--pool-frac", t_pool_frac, "pool capacity fraction");
  train->add_option("--k", t_k, "features per pool slot");
  train->add_option("--epochs", t_epochs, "epochs");
  train->add_option("--seed", t_seed, "top-level seed");
  train->add_option("--data", t_data, "DCPD dataset (default: synthetic)");
  train->add_option("-o,--out", t_out, "directory for checkpoints and report.json");

  // eval
  auto* eval = app.add_subcommand("eval", "verification ROC of a probe-net checkpoint");
  SpecOptions eval_spec;
  add_spec_options(eval, eval_spec);
  std::string e_ckpt, e_data;
  std::size_t e_gen = 1000, e_imp = 10000;
  eval->add_option("--checkpoint", e_ckpt, "DCPN network file")->required();
  eval->add_option("--data", e_data, "DCPD dataset (default: synthetic from config)");
  eval->add_option("--genuine", e_gen, "genuine pairs")->capture_default_str();
  eval->add_option("--impostor", e_imp, "impostor pairs")->capture_default_str();

  // bench
  auto* bench = app.add_subcommand("bench", "classifier-state memory and throughput grid");
  std::vector<std::size_t> b_nids{1000, 10000, 100000};
  std::vector<std::string> b_methods{"dcp", "fc"};
  std::size_t b_trials = 3, b_threads = 1, b_pool_c = 1000;
  std::string b_out, b_format = "json";
  bench->add_option("--n-ids", b_nids, "identity counts")->delimiter(',')->capture_default_str();
  bench->add_option("--methods", b_methods, "methods")->delimiter(',')->capture_default_str();
  bench->add_option("--trials", b_trials, "timed trials per point")->capture_default_str();
  bench->add_option("--threads", b_threads, "worker threads")->capture_default_str();
  bench->add_option("--pool-c", b_pool_c, "pool capacity C")->capture_default_str();
  bench->add_option("-o,--out", b_out, "report file (default: stdout)");
  bench->add_option("--format", b_format, "json | csv")->capture_default_str();

  // report
  auto* report = app.add_subcommand("report", "re-emit a benchmark report");
  std::string r_in, r_out, r_format = "csv";
  report->add_option("-i,--input", r_in, "benchmark JSON report")->required();
  report->add_option("-o,--out", r_out, "output file (default: stdout)");
  report->add_option("--format", r_format, "json | csv")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Help requests exit 0; every other parse failure is a usage error.
    return app.exit(e, out, err) == 0 ? 0 : 1;
  }

  if (const char* env = std::getenv("DCP_THREADS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n > 0) set_worker_threads(static_cast<std::size_t>(n));
  }

  try {
    if (gen->parsed()) {
      if (zipf > 0.0) {
        sc.imbalance = Imbalance::zipf;
        sc.zipf_exponent = zipf;
      }
      const Dataset ds = generate(sc);
      save_dataset(ds, gen_out);
      if (!gen_csv.empty()) export_csv(ds, gen_csv);
      if (!quiet) {
        out << "wrote " << gen_out << ": n_id=" << ds.n_id << " n_total=" << ds.size()
            << " k_bar=" << ds.k_bar << '\n';
      }
      return 0;
    }

    if (train->parsed()) {
      std::vector<std::pair<std::string, std::string>> flags;
      if (!t_method.empty()) flags.emplace_back("method", t_method);
      if (!t_pool_frac.empty()) flags.emplace_back("pool_frac", t_pool_frac);
      if (!t_k.empty()) flags.emplace_back("k", t_k);
      if (!t_epochs.empty()) flags.emplace_back("epochs", t_epochs);
      if (!t_seed.empty()) flags.emplace_back("seed", t_seed);
      if (!t_data.empty()) flags.emplace_back("data_path", t_data);
      const RunSpec spec = build_spec(train_spec, flags);
      out << "# effective config\n" << effective_config(spec) << "# end config\n";
      const Dataset ds = load_or_generate(spec);
      RunOptions ro;
      ro.out_dir = t_out;
      ro.progress = quiet ? nullptr : &out;
      const TrainReport rep = run(spec.train, ds, ro);
      if (!quiet) {
        for (const auto& e : rep.epochs) {
          out << "epoch=" << e.epoch << " lr=" << e.lr << " ce=" << e.ce << " cos=" << e.cos
              << " total=" << e.total << " ms/step=" << e.ms_per_step << '\n';
        }
      }
      out << report_json(rep) << '\n';
      return 0;
    }

    if (eval->parsed()) {
      std::vector<std::pair<std::string, std::string>> flags;
      if (!e_data.empty()) flags.emplace_back("data_path", e_data);
      const RunSpec spec = build_spec(eval_spec, flags);
      const Dataset ds = load_or_generate(spec);
      const EmbedNet net = load_net(e_ckpt);
      const PairSet pairs =
          split_eval_pairs(ds, e_gen, e_imp, derive_seed(spec.train.seed, "pairs"));
      const VerifyResult vr = verify(net, ds, pairs);
      nlohmann::ordered_json j;
      j["roc_auc"] = vr.roc_auc;
      j["n_genuine"] = pairs.genuine.size();
      j["n_impostor"] = pairs.impostor.size();
      for (auto [far, tpr] : vr.tpr_at_far) {
        j["tpr_at_far"].push_back({{"far", far}, {"tpr", tpr}});
      }
      out << j.dump(2) << '\n';
      return 0;
    }

    if (bench->parsed()) {
      const ReportFormat fmt = to_format(b_format);
      set_worker_threads(b_threads);
      BenchOptions bo = default_bench_options();
      bo.trials = b_trials;
      bo.base.pool_c = b_pool_c;
      std::vector<BenchPoint> grid;
      for (const auto& m : b_methods) {
        for (std::size_t n : b_nids) grid.push_back({parse_method(m), n});
      }
      const BenchResult res = throughput_bench(grid, bo);
      if (b_out.empty()) {
        out << render_report(res, fmt);
      } else {
        emit_report(res, b_out, fmt);
      }
      return 0;
    }

    if (report->parsed()) {
      const ReportFormat fmt = to_format(r_format);
      std::ifstream is(r_in);
      if (!is) throw PersistenceError("cannot open " + r_in);
      std::stringstream ss;
      ss << is.rdbuf();
      const BenchResult res = parse_report_json(ss.str());
      if (r_out.empty()) {
        out << render_report(res, fmt);
      } else {
        emit_report(res, r_out, fmt);
      }
      return 0;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return is_user_error(e) ? 1 : 2;
  }
  return 1;
}

}  // namespace dcp::cli
