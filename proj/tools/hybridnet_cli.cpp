#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "httplib.h"
#include "hybridnet/hybridnet.hpp"

#ifndef HYBRIDNET_DEFAULT_DATA
#define HYBRIDNET_DEFAULT_DATA "data"
#endif

namespace fs = std::filesystem;
using namespace hybridnet;

namespace {

std::string env_or(const char* name, std::string fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

struct DataPaths {
  std::string dir = env_or("HYBRIDNET_DATA_DIR", HYBRIDNET_DEFAULT_DATA);
  std::string pool() const { return dir + "/pool_red_meat.json"; }
  std::string lexicon() const { return dir + "/lexicon_red_meat.json"; }
  std::string prompts() const { return dir + "/prompts"; }
};

std::shared_ptr<ChatTransport> transport_from_env() {
  auto endpoint = env_or("HYBRIDNET_LLM_ENDPOINT", "");
  if (endpoint.empty()) return nullptr;
  return std::make_shared<HttpChatTransport>(HttpTransportOptions{endpoint, env_or("HYBRIDNET_API_KEY", "")});
}

std::shared_ptr<const Lexicon> load_lexicon(const DataPaths& d) {
  return std::make_shared<const Lexicon>(Lexicon::load_file(d.lexicon()));
}

/// Writes CSV for *.csv paths, JSON otherwise.
void write_series(const MetricsSeries& s, const std::string& path, const nlohmann::json& extra = {}) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path);
  if (fs::path(path).extension() == ".csv") {
    write_metrics_csv(s, out);
  } else {
    out << metrics_to_json(s, extra.is_null() ? nlohmann::json::object() : extra).dump(2) << '\n';
  }
}

std::unique_ptr<Annotator> make_annotator(const std::string& kind, const DataPaths& d, const std::string& model) {
  if (kind == "lexicon") return std::make_unique<LexiconAnnotator>(load_lexicon(d));
  if (kind == "llm") {
    auto t = transport_from_env();
    if (!t) throw Error(ErrorCode::config, "llm annotator needs HYBRIDNET_LLM_ENDPOINT");
    return std::make_unique<LlmAnnotator>(t, model);
  }
  throw Error(ErrorCode::config, "unknown annotator '" + kind + "'");
}

httplib::Server* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Networked opinion-dynamics experiments with human and LLM agents"};
  app.require_subcommand(1);
  DataPaths data;
  app.add_option("--data", data.dir, "Directory with the pool, lexicon and prompts")->capture_default_str();

  // serve
  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  std::string listen = env_or("HYBRIDNET_LISTEN", "127.0.0.1:8080");
  std::string state_dir = "hybridnet-data";
  std::string ui_dir;
  std::string serve_annotator = "lexicon";
  serve->add_option("--listen", listen, "host:port")->capture_default_str();
  serve->add_option("--state", state_dir, "Directory for run records")->capture_default_str();
  serve->add_option("--ui", ui_dir, "Static files mounted at /");
  serve->add_option("--annotator", serve_annotator, "lexicon or llm")->capture_default_str();

  // run-ai
  auto* run_ai = app.add_subcommand("run-ai", "Batch of AI-only runs");
  std::string framing = "both", backend = "llm", policy = "majority-copy", out_dir = "runs-out", ai_annotator = "lexicon";
  int runs = 21;
  std::uint64_t seed = 1;
  std::size_t parallelism = 4;
  run_ai->add_option("--framing", framing)->check(CLI::IsMember({"consensus", "opinion", "both"}))->capture_default_str();
  run_ai->add_option("--runs", runs, "Runs per framing")->check(CLI::PositiveNumber)->capture_default_str();
  run_ai->add_option("--seed", seed, "First seed; run k uses seed + k")->capture_default_str();
  run_ai->add_option("--backend", backend)->check(CLI::IsMember({"llm", "scripted"}))->capture_default_str();
  run_ai->add_option("--policy", policy, "Scripted policy")->capture_default_str();
  run_ai->add_option("--parallelism", parallelism)->check(CLI::PositiveNumber)->capture_default_str();
  run_ai->add_option("--annotator", ai_annotator, "lexicon or llm")->capture_default_str();
  run_ai->add_option("--out", out_dir)->capture_default_str();

  // metrics
  auto* metrics = app.add_subcommand("metrics", "Score a transcript");
  std::string transcript_path, metrics_out, audit_out, metrics_annotator = "lexicon";
  bool include_self = false;
  metrics->add_option("--transcript", transcript_path)->required()->check(CLI::ExistingFile);
  metrics->add_option("--out", metrics_out, ".csv or .json; stdout CSV when omitted");
  metrics->add_option("--audit", audit_out, "Per-statement label CSV");
  metrics->add_option("--annotator", metrics_annotator)->capture_default_str();
  metrics->add_flag("--include-self", include_self, "Count the node itself in its neighbourhood average");

  // plot
  auto* plot = app.add_subcommand("plot", "Render metric series as SVG");
  std::vector<std::string> series_args;
  std::string plot_out = "metrics.svg";
  plot->add_option("--series", series_args, "[label=]path, repeatable")->required();
  plot->add_option("--out", plot_out)->capture_default_str();

  // validate-pool
  auto* validate = app.add_subcommand("validate-pool", "Check a statement pool");
  std::string pool_path;
  validate->add_option("pool", pool_path)->required();

  // init-run
  auto* init = app.add_subcommand("init-run", "Seed a run and write its iteration-0 transcript");
  std::uint64_t init_seed = 1;
  std::string init_out = "transcript.json", init_condition = "ai_only";
  init->add_option("--seed", init_seed)->capture_default_str();
  init->add_option("--condition", init_condition)->capture_default_str();
  init->add_option("--out", init_out)->capture_default_str();

  // baseline
  auto* baseline = app.add_subcommand("baseline", "Classical opinion-model trajectory on the seeded lattice");
  std::string model = "fj", baseline_out;
  double lambda = 1.0, epsilon = 1.5, mu = 0.5;
  int iterations = 8;
  std::uint64_t baseline_seed = 1;
  baseline->add_option("--model", model)->check(CLI::IsMember({"fj", "bc"}))->capture_default_str();
  baseline->add_option("--lambda", lambda, "FJ susceptibility")->capture_default_str();
  baseline->add_option("--epsilon", epsilon, "BC confidence bound")->capture_default_str();
  baseline->add_option("--mu", mu, "BC convergence rate")->capture_default_str();
  baseline->add_option("--iterations", iterations)->capture_default_str();
  baseline->add_option("--seed", baseline_seed)->capture_default_str();
  baseline->add_option("--out", baseline_out, ".csv or .json; stdout CSV when omitted");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*validate) {
      auto pool = load_pool_file(pool_path);
      int pos = 0, neg = 0;
      for (const auto& s : pool.statements) {
        pos += s.seed_stance == Stance::positive;
        neg += s.seed_stance == Stance::negative;
      }
      std::cout << "ok: " << pool.statements.size() << " statements (" << pos << " positive, " << neg
                << " negative)\n";
      return 0;
    }

    if (*init) {
      RunConfig cfg;
      cfg.condition = parse_condition(init_condition);
      cfg.seed = init_seed;
      RunState run(cfg, load_pool_file(data.pool()), wall_clock(), "init-" + std::to_string(init_seed));
      save_transcript_file(run.transcript(), init_out);
      std::cout << init_out << '\n';
      return 0;
    }

    if (*metrics) {
      auto t = load_transcript_file(transcript_path);
      auto annotator = make_annotator(metrics_annotator, data, t.config.model);
      auto annotated = annotate_run(t, *annotator, t.completed_iterations());
      auto series = series_from_opinions(annotated.opinions, t.topology(), {include_self});
      if (metrics_out.empty()) {
        write_metrics_csv(series, std::cout);
      } else {
        write_series(series, metrics_out, {{"run_id", t.run_id}, {"framing", to_string(t.config.framing)}});
      }
      if (!audit_out.empty()) {
        std::ofstream a(audit_out);
        write_audit_csv(annotated.audit, a);
      }
      return 0;
    }

    if (*plot) {
      std::vector<LabeledSeries> all;
      for (const auto& arg : series_args) {
        auto eq = arg.find('=');
        std::string label = eq == std::string::npos ? fs::path(arg).stem().string() : arg.substr(0, eq);
        std::string path = eq == std::string::npos ? arg : arg.substr(eq + 1);
        all.push_back({label, load_metrics_file(path)});
      }
      std::ofstream out(plot_out);
      if (!out) throw Error(ErrorCode::io, "cannot write " + plot_out);
      render_series_svg(all, out);
      std::cout << plot_out << '\n';
      return 0;
    }

    if (*baseline) {
      GridTopology topo;
      auto layout = seed_layout(load_pool_file(data.pool()), topo, {}, baseline_seed);
      std::vector<int> z;
      for (auto s : layout.stances) z.push_back(value(s));
      auto series = model == "fj" ? baselines::fj_series(topo, z, lambda, iterations)
                                  : baselines::bc_series(topo, z, epsilon, mu, baseline_seed, iterations);
      if (baseline_out.empty()) {
        write_metrics_csv(series, std::cout);
      } else {
        write_series(series, baseline_out);
      }
      return 0;
    }

    if (*run_ai) {
      auto pool = load_pool_file(data.pool());
      auto lexicon = load_lexicon(data);
      std::shared_ptr<ChatTransport> transport;
      if (backend == "llm") {
        transport = transport_from_env();
        if (!transport) throw Error(ErrorCode::config, "--backend llm needs HYBRIDNET_LLM_ENDPOINT");
      }
      std::vector<RunConfig> configs;
      for (auto f : {Framing::consensus, Framing::opinion}) {
        if (framing != "both" && framing != to_string(f)) continue;
        for (int k = 0; k < runs; ++k) {
          RunConfig c;
          c.condition = Condition::ai_only;
          c.ai_backend = parse_agent_kind(backend);
          c.scripted_policy = policy;
          c.framing = f;
          c.seed = seed + static_cast<std::uint64_t>(k);
          configs.push_back(c);
        }
      }
      auto results = run_llm_batch(configs, pool, default_agent_factory(lexicon, transport, data.prompts()),
                                   {parallelism, 1, fs::path(out_dir), [] { return wall_clock(); }});
      auto annotator = make_annotator(ai_annotator, data, configs.front().model);
      std::ofstream summary(fs::path(out_dir) / "summary.csv");
      summary << "index,framing,seed,status,transcript,initial_polarization,final_polarization,final_nci,error\n";
      int failed = 0;
      for (const auto& r : results) {
        summary << r.index << ',' << to_string(r.config.framing) << ',' << r.config.seed << ',';
        if (!r.ok()) {
          ++failed;
          std::string err = r.error;
          for (auto& ch : err) {
            if (ch == ',' || ch == '\n') ch = ' ';
          }
          summary << "failed,,,,," << err << '\n';
          std::cerr << "run " << r.index << " failed: " << r.error << '\n';
          continue;
        }
        std::string status = "complete", err;
        std::optional<MetricsSeries> series;
        try {
          series = series_for_run(*r.transcript, *annotator);
          auto path = *r.path;
          path.replace_extension(".metrics.csv");
          write_series(*series, path.string());
        } catch (const Error& e) {
          status = "unscored";
          err = e.what();
        }
        summary << status << ',' << r.path->filename().string() << ',';
        if (series) {
          const auto& last = series->records.back();
          summary << format_number(series->records.front().polarization) << ',' << format_number(last.polarization)
                  << ',' << (last.nci ? format_number(*last.nci) : "null");
        } else {
          summary << ",,";
        }
        summary << ',' << err << '\n';
      }
      std::cout << results.size() - failed << " of " << results.size() << " runs complete; summary in "
                << (fs::path(out_dir) / "summary.csv").string() << '\n';
      return failed == 0 ? 0 : 2;
    }

    if (*serve) {
      auto colon = listen.rfind(':');
      if (colon == std::string::npos) throw Error(ErrorCode::config, "--listen must be host:port");
      const auto host = listen.substr(0, colon);
      const int port = std::stoi(listen.substr(colon + 1));

      auto transport = transport_from_env();
      auto lexicon = load_lexicon(data);
      ServiceOptions o;
      o.data_dir = state_dir;
      o.pool = load_pool_file(data.pool());
      o.annotator = make_annotator(serve_annotator, data, RunConfig{}.model);
      o.agent_factory = default_agent_factory(lexicon, transport, data.prompts());
      Service service(std::move(o));
      service.recover();
      service.start_background();

      httplib::Server server;
      service.bind(server, ui_dir.empty() ? std::nullopt : std::optional<std::string>(ui_dir));
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cout << "listening on " << host << ':' << port << std::endl;
      if (!server.listen(host, port)) throw Error(ErrorCode::io, "cannot listen on " + listen);
      g_server = nullptr;
      service.stop_background();
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
