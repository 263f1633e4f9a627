#pragma once

#include <istream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

namespace nmdp::cli {

/// CLI11 config reader/writer for JSON files. Top-level keys are options of
/// the main app; an object value is a subcommand section ({"infer": {...}}).
/// Arrays become repeated inputs.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    return resolved(app, default_also).dump(2);
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(input);
    } catch (const nlohmann::json::exception& e) {
      throw CLI::ConversionError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw CLI::ConversionError("config must be a JSON object");
    std::vector<CLI::ConfigItem> items;
    flatten(doc, {}, items);
    return items;
  }

  /// Options with a long name, with their parsed or default values, nested
  /// by subcommand. Only subcommands that were used are included.
  static nlohmann::json resolved(const CLI::App* app, bool default_also = true) {
    nlohmann::json out = nlohmann::json::object();
    for (const CLI::Option* opt : app->get_options()) {
      const std::string name = opt->get_lnames().empty() ? std::string() : opt->get_lnames().front();
      if (name.empty() || name == "help" || name == "config") continue;
      if (opt->count() > 0) {
        const auto& results = opt->results();
        if (opt->get_type_size() == 0) {
          out[name] = true;
        } else if (opt->get_expected_max() > 1 || results.size() > 1) {
          out[name] = results;
        } else {
          out[name] = results.empty() ? std::string() : results.front();
        }
      } else if (default_also && !opt->get_default_str().empty()) {
        out[name] = opt->get_default_str();
      }
    }
    for (const CLI::App* sub : app->get_subcommands({})) {
      if (sub->parsed()) out[sub->get_name()] = resolved(sub, default_also);
    }
    return out;
  }

 private:
  static void flatten(const nlohmann::json& node, const std::vector<std::string>& parents,
                      std::vector<CLI::ConfigItem>& items) {
    for (const auto& [key, value] : node.items()) {
      if (value.is_object()) {
        auto sub = parents;
        sub.push_back(key);
        // Marks the section so CLI11 can select the subcommand.
        CLI::ConfigItem open;
        open.parents = sub;
        open.name = "++";
        items.push_back(open);
        flatten(value, sub, items);
        CLI::ConfigItem close;
        close.parents = sub;
        close.name = "--";
        items.push_back(close);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(scalar(v));
      } else {
        item.inputs.push_back(scalar(value));
      }
      items.push_back(std::move(item));
    }
  }

  static std::string scalar(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return v.dump();
  }
};

}  // namespace nmdp::cli
