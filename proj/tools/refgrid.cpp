#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "refgrid/editor.hpp"
#include "refgrid/eval.hpp"
#include "refgrid/level.hpp"
#include "refgrid/metrics.hpp"
#include "refgrid/net/editor_server.hpp"
#include "refgrid/net/openai_adapter.hpp"
#include "refgrid/serializers.hpp"
#include "refgrid/trajectory.hpp"

namespace {

using namespace refgrid;

std::vector<Action> parse_actions(const std::string& csv) {
  std::vector<Action> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    if (std::isdigit(static_cast<unsigned char>(item[0]))) {
      auto a = action_from_code(std::stoi(item));
      if (!a) throw std::invalid_argument("action code out of range: " + item);
      out.push_back(*a);
    } else {
      out.push_back(parse_action(item));
    }
  }
  return out;
}

std::string render(const std::string& how, const World& w, const std::vector<Observation>& history) {
  if (how == "full") return w.render_full();
  return serialize(parse_serializer(how), history);
}

std::unique_ptr<ModelAdapter> make_adapter(const std::string& model) {
  if (model == "oracle") return std::make_unique<OracleAdapter>();
  if (model.rfind("stale", 0) == 0) {
    int lag = 3;
    if (auto colon = model.find(':'); colon != std::string::npos) lag = std::stoi(model.substr(colon + 1));
    return std::make_unique<StaleMemoryAdapter>(lag);
  }
  auto cfg = net::endpoint_from_env(model);
  if (!cfg) throw std::runtime_error("model '" + model + "' needs REFGRID_API_BASE (and usually REFGRID_API_KEY)");
  return std::make_unique<net::OpenAiAdapter>(*cfg);
}

void print_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> w(header.size());
  for (std::size_t i = 0; i < header.size(); ++i) w[i] = header[i].size();
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) w[i] = std::max(w[i], r[i].size());
  }
  auto line = [&](const std::vector<std::string>& r) {
    std::string s;
    for (std::size_t i = 0; i < r.size(); ++i) s += fmt::format("{:<{}}  ", r[i], w[i]);
    while (!s.empty() && s.back() == ' ') s.pop_back();
    std::cout << s << '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
}

std::atomic<net::EditorServer*> g_server{nullptr};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"refgrid: reference gridworld simulator, probe engine and evaluation harness"};
  app.require_subcommand(1);

  // level
  auto* level = app.add_subcommand("level", "Level files");
  level->require_subcommand(1);
  std::vector<std::string> level_files;
  auto* lvalidate = level->add_subcommand("validate", "Parse and validate level files");
  lvalidate->add_option("files", level_files, "Level files")->required()->check(CLI::ExistingFile);
  bool canonical_check = false;
  lvalidate->add_flag("--canonical", canonical_check, "Also require the file to be in canonical form");

  std::string level_file;
  std::uint64_t seed = 0;
  std::string how = "grid";
  std::string actions_csv;
  auto* lrender = level->add_subcommand("render", "Render a level after optional actions");
  lrender->add_option("file", level_file)->required()->check(CLI::ExistingFile);
  lrender->add_option("--seed", seed);
  lrender->add_option("--view", how, "grid|symbolic|memory|full")->check(CLI::IsMember({"grid", "symbolic", "memory", "full"}));
  lrender->add_option("--actions", actions_csv, "Comma-separated action names or codes");
  auto* lformat = level->add_subcommand("format", "Print the canonical form of a level");
  lformat->add_option("file", level_file)->required()->check(CLI::ExistingFile);

  // trajectory
  auto* traj = app.add_subcommand("trajectory", "Trajectory files");
  traj->require_subcommand(1);
  std::string traj_file;
  auto* tvalidate = traj->add_subcommand("validate", "Load, replay and check recorded ground truths");
  tvalidate->add_option("file", traj_file)->required()->check(CLI::ExistingFile);
  auto* treplay = traj->add_subcommand("replay", "Print every step of a replay");
  treplay->add_option("file", traj_file)->required()->check(CLI::ExistingFile);
  treplay->add_option("--view", how, "grid|symbolic|memory|full")->check(CLI::IsMember({"grid", "symbolic", "memory", "full"}));
  bool probes_only = false;
  treplay->add_flag("--probes", probes_only, "Only print steps that carry probes, with their ground truth");
  auto* trefresh = traj->add_subcommand("refresh", "Recompute ground truths of computed probes");
  trefresh->add_option("file", traj_file)->required()->check(CLI::ExistingFile);
  bool write_back = false;
  trefresh->add_flag("--write", write_back, "Rewrite the file instead of printing");

  // eval
  auto* eval = app.add_subcommand("eval", "Run and report model evaluations");
  eval->require_subcommand(1);
  std::vector<std::string> traj_files;
  std::string serializer = "grid", protocol = "ctrlstatic", model, out_file, run_id;
  RunOptions opt;
  int retries = 4;
  auto* erun = eval->add_subcommand("run", "Evaluate a model on trajectories");
  erun->add_option("--trajectory", traj_files)->required()->check(CLI::ExistingFile);
  erun->add_option("--serializer", serializer)->check(CLI::IsMember({"grid", "memory", "symbolic"}));
  erun->add_option("--protocol", protocol)->check(CLI::IsMember({"ctrlstatic", "innav"}));
  erun->add_option("--model", model, "oracle, stale[:k], or an endpoint model id")->required();
  erun->add_option("--out", out_file, "JSONL results file (appended)")->required();
  erun->add_option("--run-id", run_id);
  erun->add_option("--parallel", opt.parallelism)->check(CLI::Range(1, 64));
  erun->add_option("--context-tokens", opt.context_tokens);
  erun->add_option("--temperature", opt.decoding.temperature);
  erun->add_option("--answer-tokens", opt.decoding.answer_tokens);
  erun->add_option("--thinking-tokens", opt.decoding.thinking_tokens);
  erun->add_option("--effort", opt.decoding.reasoning_effort);
  erun->add_option("--retries", retries)->check(CLI::Range(1, 20));

  std::vector<std::string> result_files;
  std::string group_by = "category,serializer", metric = "rate";
  auto* ereport = eval->add_subcommand("report", "Summarize JSONL results");
  ereport->add_option("--results", result_files)->required()->check(CLI::ExistingFile);
  ereport->add_option("--group-by", group_by);
  ereport->add_option("--metric", metric)->check(CLI::IsMember({"rate", "naveff", "depth", "hard", "serializers"}));
  int hard_models = 5;
  double hard_rate = 0.20;
  ereport->add_option("--hard-models", hard_models);
  ereport->add_option("--hard-rate", hard_rate);

  // serve
  auto* serve = app.add_subcommand("serve", "Run the editor/recorder HTTP service");
  int port = 8765;
  if (const char* env = std::getenv("REFGRID_PORT")) port = std::atoi(env);
  std::string host = "127.0.0.1", levels_root = ".";
  serve->add_option("--port", port, "Port (env REFGRID_PORT)");
  serve->add_option("--host", host);
  serve->add_option("--levels-root", levels_root)->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);

  try {
    auto registry = ProbeRegistry::with_builtins();
    registry.register_type(spatial_relation_probe_type());
    registry.freeze();

    if (lvalidate->parsed()) {
      int bad = 0;
      for (const auto& f : level_files) {
        try {
          LevelSpec spec = load_level_file(f);
          if (canonical_check) {
            std::ifstream in(f, std::ios::binary);
            std::stringstream buf;
            buf << in.rdbuf();
            if (buf.str() != emit_level(spec)) throw std::runtime_error("not in canonical form");
          }
          std::cout << "ok " << f << '\n';
        } catch (const std::exception& e) {
          ++bad;
          std::cout << f << ": " << e.what() << '\n';
        }
      }
      return bad ? 1 : 0;
    }
    if (lrender->parsed()) {
      World w = World::create(load_level_file(level_file), seed);
      std::vector<Observation> hist{observe(w)};
      for (Action a : parse_actions(actions_csv)) {
        w.step(a);
        hist.push_back(observe(w));
      }
      std::cout << render(how, w, hist);
      return 0;
    }
    if (lformat->parsed()) {
      std::cout << emit_level(load_level_file(level_file));
      return 0;
    }
    if (tvalidate->parsed()) {
      auto t = load_trajectory(traj_file, registry);
      auto mismatches = check_recorded_truths(t, registry);
      for (const auto& m : mismatches) {
        std::cout << fmt::format("probe {} ({}): recorded '{}' but the replay gives '{}'\n", m.probe_index,
                                 t.probes[m.probe_index].id, m.recorded, m.computed);
      }
      std::cout << fmt::format("{}: {} segment(s), {} probe(s), {} mismatch(es)\n", traj_file, t.levels.size(),
                               t.probes.size(), mismatches.size());
      return mismatches.empty() ? 0 : 1;
    }
    if (treplay->parsed()) {
      auto t = load_trajectory(traj_file, registry);
      replay(t, [&](const ReplayFrame& f) {
        if (probes_only && f.due.empty()) return;
        std::vector<Observation> seg(f.history.begin() + static_cast<std::ptrdiff_t>(f.segment_begin), f.history.end());
        std::cout << fmt::format("=== segment {} step {} ===\n", f.segment, f.step);
        std::cout << render(how, f.world, how == "memory" ? f.history : seg);
        for (const Probe* p : f.due) {
          auto r = resolve_truth(*p, registry, f.world, seg, t.actions[static_cast<std::size_t>(f.segment)]);
          std::cout << fmt::format("probe {} [{}] {} -> {}\n", p->id, p->probe_type, p->question, r.rendered);
        }
      });
      return 0;
    }
    if (trefresh->parsed()) {
      auto t = load_trajectory(traj_file, registry);
      Trajectory fresh = refresh_truths(t, registry);
      if (write_back) {
        save_trajectory_file(fresh, traj_file);
      } else {
        std::cout << emit_trajectory(fresh);
      }
      return 0;
    }
    if (erun->parsed()) {
      auto adapter = make_adapter(model);
      opt.serializer = parse_serializer(serializer);
      opt.retry.max_attempts = retries;
      opt.run_id = run_id.empty() ? fmt::format("{}-{}-{}", model, protocol, serializer) : run_id;
      std::ofstream out(out_file, std::ios::app);
      if (!out) throw std::runtime_error("cannot open " + out_file);
      opt.on_record = [&](const EvalRecord& r) {
        write_record(out, r);
        out.flush();
      };
      std::vector<EvalRecord> all;
      for (const auto& f : traj_files) {
        auto t = load_trajectory(f, registry);
        auto recs = run_protocol(parse_protocol(protocol), t, *adapter, registry, opt);
        all.insert(all.end(), recs.begin(), recs.end());
      }
      Tally tally;
      for (const auto& r : all) tally.add(r.verdict);
      std::cout << fmt::format("{} records: {} correct, {} hallucinated, {} unparseable, {} transport failures\n",
                               all.size(), tally.correct, tally.hallucinated, tally.unparseable,
                               tally.transport_failure);
      return 0;
    }
    if (ereport->parsed()) {
      std::vector<EvalRecord> records;
      for (const auto& f : result_files) {
        std::ifstream in(f);
        auto part = read_records(in);
        records.insert(records.end(), part.begin(), part.end());
      }
      auto keys = parse_group_by(group_by);
      if (metric == "rate") {
        std::vector<std::vector<std::string>> rows;
        for (const auto& r : hallucination_rate(records, keys)) {
          auto row = r.key;
          row.push_back(fmt::format("{:.1f}", 100 * r.rate));
          row.push_back(std::to_string(r.tally.graded()));
          row.push_back(std::to_string(r.tally.unparseable));
          row.push_back(std::to_string(r.tally.transport_failure));
          rows.push_back(row);
        }
        auto header = keys;
        for (const char* h : {"halluc%", "graded", "unparseable", "transport"}) header.emplace_back(h);
        print_table(header, rows);
      } else if (metric == "naveff") {
        std::vector<std::vector<std::string>> rows;
        for (const auto& r : nav_effect(records, keys)) {
          auto row = r.key;
          row.push_back(fmt::format("{:.1f}", 100 * r.innav_rate));
          row.push_back(fmt::format("{:.1f}", 100 * r.ctrl_rate));
          row.push_back(fmt::format("{:+.1f}", r.naveff_pp));
          row.push_back(fmt::format("[{:+.1f}, {:+.1f}]", r.ci_low_pp, r.ci_high_pp));
          rows.push_back(row);
        }
        auto header = keys;
        for (const char* h : {"innav%", "ctrl%", "naveff_pp", "95% CI"}) header.emplace_back(h);
        print_table(header, rows);
      } else if (metric == "depth") {
        auto d = depth_slope(records);
        for (const auto& [q, pp] : d.rate_pp) std::cout << fmt::format("Q{}  {:.1f}%\n", q, pp);
        std::cout << fmt::format("slope {:+.2f} pp/quintile\n", d.slope_pp);
      } else if (metric == "hard") {
        for (const auto& [lvl, ser] : hard_subset(model_cell_rates(records), hard_models, hard_rate)) {
          std::cout << lvl << '\t' << ser << '\n';
        }
      } else {
        std::vector<std::vector<std::string>> rows;
        for (const auto& w : serializer_comparison(records)) {
          std::string rates;
          for (const auto& [s, r] : w.serializer_rate) rates += fmt::format("{}={:.1f}% ", s, 100 * r);
          rows.push_back({w.level, rates, w.winner, fmt::format("{:.1f}", w.margin_pp)});
        }
        print_table({"level", "rates", "winner", "margin_pp"}, rows);
      }
      return 0;
    }
    if (serve->parsed()) {
      auto service = std::make_shared<EditorService>(
          EditorOptions{levels_root, std::make_shared<const ProbeRegistry>(std::move(registry))});
      net::EditorServer server(service, host);
      int bound = server.bind(port);
      if (bound < 0) throw std::runtime_error(fmt::format("cannot bind {}:{}", host, port));
      g_server = &server;
      std::signal(SIGINT, [](int) {
        if (auto* s = g_server.load()) s->stop();
      });
      std::cerr << fmt::format("refgrid editor service on http://{}:{}\n", host, bound);
      server.run();
      g_server = nullptr;
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
