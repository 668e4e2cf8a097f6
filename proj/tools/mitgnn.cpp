#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "mitgnn/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Multi-intent translation GNN for basket recommendation"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every command");

  struct Parsed {
    std::string config_path;
    std::map<std::string, std::string> overrides;
  };
  std::map<std::string, Parsed> parsed;
  for (const std::string& name : mitgnn::command_names()) {
    CLI::App* sub = app.add_subcommand(name, "run the " + name + " step");
    Parsed& p = parsed[name];
    sub->add_option("--config", p.config_path, "key=value config file");
    for (const auto& key : mitgnn::config_keys()) {
      sub->add_option("--" + std::string(key.name), p.overrides[key.name],
                      std::string(key.help) + " [default " + key.default_value + "]");
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : mitgnn::exit_config;
  }

  for (const std::string& name : mitgnn::command_names()) {
    CLI::App* sub = app.get_subcommand(name);
    if (!sub->parsed()) continue;
    try {
      mitgnn::RunConfig cfg(name);
      const Parsed& p = parsed[name];
      if (!p.config_path.empty()) cfg.merge_file(p.config_path);
      for (const auto& key : mitgnn::config_keys()) {
        if (sub->count("--" + std::string(key.name)) > 0) cfg.set(key.name, p.overrides.at(key.name));
      }
      return mitgnn::run_command(name, cfg, std::cout, std::cerr);
    } catch (const mitgnn::Error& e) {
      std::cerr << e.what() << '\n';
      return mitgnn::exit_code(e.kind());
    }
  }
  return mitgnn::exit_internal;
}
