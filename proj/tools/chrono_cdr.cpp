// chrono-cdr: command-line front end over a run directory.

#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "chrono_cdr/pipeline.hpp"

namespace {

struct Failure {
  std::string kind;
  std::string message;
  std::string producer;
  int code;
};

int report(const Failure& f, bool json) {
  if (json) {
    nlohmann::json j{{"error", {{"kind", f.kind}, {"message", f.message}, {"exit_code", f.code}}}};
    if (!f.producer.empty()) j["error"]["producer"] = f.producer;
    std::fprintf(stderr, "%s\n", j.dump().c_str());
  } else {
    std::fprintf(stderr, "chrono-cdr: %s error: %s\n", f.kind.c_str(), f.message.c_str());
  }
  return f.code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Circadian and mobility indicators from call detail records", "chrono-cdr"};
  app.require_subcommand(1);
  std::string config_path;
  unsigned threads = 0;
  bool threads_given = false;
  bool json_errors = false;

  for (const auto& name : chrono_cdr::subcommands()) {
    auto* sub = app.add_subcommand(name, "run the " + name + " stage");
    sub->add_option("--config", config_path, "flat JSON run configuration");
    sub->add_option_function<unsigned>(
        "--threads", [&](const unsigned& n) { threads = n, threads_given = true; },
        "worker threads (0 = hardware concurrency)");
    sub->add_flag("--json-errors", json_errors, "print errors as JSON on stderr");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    bool json = false;
    for (int i = 1; i < argc; ++i) json = json || std::string(argv[i]) == "--json-errors";
    return report({"validation", e.what(), "", 2}, json);
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    auto config = config_path.empty() ? chrono_cdr::RunConfig() : chrono_cdr::RunConfig::load(config_path);
    if (!threads_given) {
      auto t = config.get<long long>("threads");
      if (t < 0) chrono_cdr::throw_validation("threads must be >= 0");
      threads = static_cast<unsigned>(t);
    }
    chrono_cdr::run_subcommand(name, config, threads);
  } catch (const chrono_cdr::Error& e) {
    return report({std::string(chrono_cdr::error_kind_name(e.kind())), e.what(), e.producer(),
                   chrono_cdr::exit_code(e.kind())},
                  json_errors);
  } catch (const nlohmann::json::exception& e) {
    return report({"validation", e.what(), "", 2}, json_errors);
  } catch (const std::filesystem::filesystem_error& e) {
    return report({"io", e.what(), "", 4}, json_errors);
  } catch (const std::exception& e) {
    return report({"internal", e.what(), "", 1}, json_errors);
  }
  return 0;
}
