#include "gradsim/param_io.hpp"

#include "gradsim/error.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace gradsim {

using nlohmann::json;

namespace {

json spec_to_json(const NetworkSpec& spec) {
  json acts = json::array();
  for (Activation a : spec.activations) {
    acts.push_back(std::string(to_string(a)));
  }
  return json{{"layer_sizes", spec.layer_sizes},
              {"activations", acts},
              {"output_activation", std::string(to_string(spec.output_activation))}};
}

NetworkSpec spec_from_json(const json& j) {
  NetworkSpec spec;
  spec.layer_sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
  for (const auto& a : j.at("activations")) {
    spec.activations.push_back(parse_activation(a.get<std::string>()));
  }
  spec.output_activation = parse_activation(j.value("output_activation", std::string("identity")));
  spec.validate();
  return spec;
}

} // namespace

std::string params_to_json(const NetworkSpec& spec, const ParamVector& params) {
  params.check_matches(spec);
  json layout = json::array();
  for (const LayoutEntry& e : params.layout()) {
    layout.push_back({{"layer", e.layer},
                      {"kind", std::string(to_string(e.kind))},
                      {"shape", {e.rows, e.cols}},
                      {"offset", e.offset}});
  }
  json values = json::array();
  for (double v : params.values()) {
    values.push_back(v);
  }
  const json doc{{"schema", kParamSchema},
                 {"version", kParamSchemaVersion},
                 {"network", spec_to_json(spec)},
                 {"layout", layout},
                 {"values", values}};
  return doc.dump(1);
}

void save_params(const std::filesystem::path& path, const NetworkSpec& spec,
                 const ParamVector& params) {
  std::ofstream out(path);
  if (!out) {
    throw FormatError("cannot open '" + path.string() + "' for writing");
  }
  out << params_to_json(spec, params) << '\n';
}

LoadedParams params_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("parameter file is not valid JSON: ") + e.what());
  }
  if (doc.value("schema", std::string()) != kParamSchema) {
    throw FormatError("not a gradsim parameter container");
  }
  const int version = doc.value("version", 0);
  if (version != kParamSchemaVersion) {
    throw FormatError("unsupported parameter schema version " + std::to_string(version));
  }
  LoadedParams loaded;
  loaded.spec = spec_from_json(doc.at("network"));
  std::vector<LayoutEntry> layout;
  for (const auto& e : doc.at("layout")) {
    const std::string kind = e.at("kind").get<std::string>();
    if (kind != "weight" && kind != "bias") {
      throw FormatError("unknown parameter block kind '" + kind + "'");
    }
    layout.push_back({e.at("layer").get<std::size_t>(),
                      kind == "weight" ? ParamKind::weight : ParamKind::bias,
                      e.at("shape").at(0).get<std::size_t>(), e.at("shape").at(1).get<std::size_t>(),
                      e.at("offset").get<std::size_t>()});
  }
  if (layout != make_layout(loaded.spec)) {
    throw FormatError("stored layout disagrees with the stored network spec");
  }
  loaded.params = ParamVector(doc.at("values").get<std::vector<double>>(), std::move(layout));
  return loaded;
}

LoadedParams load_params(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw FormatError("cannot open '" + path.string() + "'");
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return params_from_json(ss.str());
}

ParamVector load_params(const std::filesystem::path& path, const NetworkSpec& expected) {
  LoadedParams loaded = load_params(path);
  if (!(loaded.spec == expected)) {
    throw ShapeError("parameter file '" + path.string() + "' was saved for a different network");
  }
  return std::move(loaded.params);
}

} // namespace gradsim
