#include "config.hpp"

#include "gradsim/error.hpp"
#include "gradsim/idx.hpp"
#include "gradsim/toy.hpp"
#include "gradsim/version.hpp"

#include <ctime>
#include <fstream>
#include <sstream>

namespace gradsim::cli {

namespace {

json network_default(std::vector<std::size_t> hidden, Activation activation = Activation::tanh) {
  return {{"hidden", hidden}, {"activation", std::string(to_string(activation))}, {"output_activation", "identity"}};
}

json train_default(const TrainConfig& t) {
  return {{"lr", t.adam.lr},
          {"beta1", t.adam.beta1},
          {"beta2", t.adam.beta2},
          {"eps", t.adam.eps},
          {"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"loss", std::string(to_string(t.loss))},
          {"init_gain", t.init_gain}};
}

json density_default() {
  const DensityConfig d;
  return {{"taus", d.taus},
          {"alphas", d.alphas},
          {"bins", d.bins},
          {"k_nearest", 10},
          {"include_self", d.include_self},
          {"histogram_include_self", d.histogram_include_self}};
}

json toy_data(double f) { return {{"source", "toy"}, {"frequency", f}, {"n", 2048}, {"jitter", false}}; }

} // namespace

json default_config(const std::string& command) {
  json c = {{"seed", 0}, {"threads", 0}};
  if (command == "train") {
    c["data"] = toy_data(2.0);
    c["network"] = network_default({64, 64, 64, 64, 64});
    c["train"] = train_default(TrainConfig{});
  } else if (command == "bank") {
    c["params"] = "params.json";
    c["data"] = toy_data(2.0);
    c["output"] = nullptr;
    c["binarize"] = false;
    c["adversary"] = false;
  } else if (command == "neighbors") {
    c["params"] = "params.json";
    c["bank"] = nullptr;
    c["data"] = toy_data(2.0);
    c["output"] = nullptr;
    c["density"] = density_default();
  } else if (command == "denoise") {
    c["params"] = "params.json";
    c["data"] = toy_data(2.0);
    c["output"] = 0;
  } else if (command == "sweep-toy") {
    const SweepConfig s;
    c["frequencies"] = s.frequencies;
    c["repeats"] = s.repeats;
    c["n"] = s.n;
    c["jitter"] = s.jitter;
    c["network"] = network_default(s.hidden, s.activation);
    c["train"] = train_default(s.train);
    json d = density_default();
    d.erase("k_nearest");
    d.erase("histogram_include_self");
    d.erase("bins");
    c["estimators"] = d;
  } else if (command == "dup-noise") {
    const DuplicateNoiseSpec s;
    c["n_dup"] = {4, 16};
    c["n_sites"] = s.n_sites;
    c["sigma"] = s.sigma;
    c["trials"] = s.trials;
    c["network"] = network_default(s.hidden, s.activation);
    c["train"] = train_default(s.train);
  } else if (command == "enforce-demo") {
    const EnforceDemoConfig e;
    c["source"] = e.source;
    c["blobs"] = {{"n", e.blobs.n}, {"separation", e.blobs.separation}, {"spread", e.blobs.spread}};
    c["idx"] = {{"images", ""}, {"labels", ""}, {"count", *e.idx_count}};
    c["network"] = network_default(e.hidden, e.activation);
    c["train"] = train_default(e.train);
    c["aux_weight"] = e.aux_weight;
    c["group_batch"] = e.group_batch;
    c["validation_fraction"] = e.validation_fraction;
    c["eval_every"] = e.eval_every;
  } else {
    throw std::invalid_argument("unknown command: " + command);
  }
  return c;
}

json load_config_file(const std::filesystem::path& path, const std::string& command) {
  std::ifstream in(path);
  if (!in) {
    throw FormatError("cannot open config " + path.string());
  }
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError("config " + path.string() + ": " + e.what());
  }
  if (j.contains("manifest_version") && j.contains("config")) {
    if (j.value("command", command) != command) {
      throw std::invalid_argument("manifest " + path.string() + " was written by '" +
                                  j.value("command", std::string()) + "', not '" + command + "'");
    }
    return j.at("config");
  }
  return j;
}

void merge_into(json& base, const json& patch) {
  if (!patch.is_object() || !base.is_object()) {
    base = patch;
    return;
  }
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    if (base.contains(it.key()) && base[it.key()].is_object() && it.value().is_object()) {
      merge_into(base[it.key()], it.value());
    } else {
      base[it.key()] = it.value();
    }
  }
}

TrainConfig train_from_json(const json& j, std::uint64_t seed) {
  TrainConfig t;
  t.adam.lr = j.value("lr", t.adam.lr);
  t.adam.beta1 = j.value("beta1", t.adam.beta1);
  t.adam.beta2 = j.value("beta2", t.adam.beta2);
  t.adam.eps = j.value("eps", t.adam.eps);
  t.epochs = j.value("epochs", t.epochs);
  t.batch_size = j.value("batch_size", t.batch_size);
  t.loss = parse_loss(j.value("loss", std::string(to_string(t.loss))));
  t.init_gain = j.value("init_gain", t.init_gain);
  t.seed = seed;
  t.validate();
  return t;
}

DensityConfig density_from_json(const json& j) {
  DensityConfig d;
  d.taus = j.value("taus", d.taus);
  d.alphas = j.value("alphas", d.alphas);
  d.bins = j.value("bins", d.bins);
  d.k_nearest = j.value("k_nearest", d.k_nearest);
  d.include_self = j.value("include_self", d.include_self);
  d.histogram_include_self = j.value("histogram_include_self", d.histogram_include_self);
  d.validate();
  return d;
}

NetworkSpec network_from_json(const json& j, std::size_t input, std::size_t output) {
  const auto hidden = j.value("hidden", std::vector<std::size_t>{});
  const Activation act = parse_activation(j.value("activation", std::string("tanh")));
  const Activation out = parse_activation(j.value("output_activation", std::string("identity")));
  NetworkSpec spec = NetworkSpec::mlp(input, hidden, output, act, out);
  spec.validate();
  return spec;
}

Dataset data_from_json(const json& j, std::uint64_t seed) {
  const std::string source = j.value("source", std::string("toy"));
  if (source == "toy") {
    ToySpec t;
    t.frequency = j.value("frequency", t.frequency);
    t.n = j.value("n", t.n);
    t.jitter = j.value("jitter", t.jitter);
    t.seed = seed;
    return gen_toy(t);
  }
  if (source == "blobs") {
    BlobSpec b;
    b.n = j.value("n", b.n);
    b.separation = j.value("separation", b.separation);
    b.spread = j.value("spread", b.spread);
    b.seed = seed;
    return gen_blobs(b);
  }
  if (source == "idx") {
    IdxSubset sub;
    if (j.contains("count") && !j.at("count").is_null()) {
      sub.count = j.at("count").get<std::size_t>();
    }
    sub.seed = seed;
    return read_idx(j.at("images").get<std::string>(), j.at("labels").get<std::string>(), sub);
  }
  throw std::invalid_argument("unknown data source: " + source);
}

SweepConfig sweep_from_json(const json& cfg) {
  SweepConfig s;
  s.frequencies = cfg.value("frequencies", s.frequencies);
  s.repeats = cfg.value("repeats", s.repeats);
  s.n = cfg.value("n", s.n);
  s.jitter = cfg.value("jitter", s.jitter);
  const json& net = cfg.at("network");
  s.hidden = net.value("hidden", s.hidden);
  s.activation = parse_activation(net.value("activation", std::string("tanh")));
  s.train = train_from_json(cfg.at("train"), cfg.value("seed", std::uint64_t{0}));
  s.estimators = density_from_json(cfg.value("estimators", json::object()));
  s.threads = cfg.value("threads", std::size_t{0});
  s.validate();
  return s;
}

DuplicateNoiseSpec dup_noise_from_json(const json& cfg, std::size_t n_dup) {
  DuplicateNoiseSpec s;
  s.n_dup = n_dup;
  s.n_sites = cfg.value("n_sites", s.n_sites);
  s.sigma = cfg.value("sigma", s.sigma);
  s.trials = cfg.value("trials", s.trials);
  s.seed = cfg.value("seed", std::uint64_t{0});
  const json& net = cfg.at("network");
  s.hidden = net.value("hidden", s.hidden);
  s.activation = parse_activation(net.value("activation", std::string("tanh")));
  s.train = train_from_json(cfg.at("train"), s.seed);
  s.threads = cfg.value("threads", std::size_t{0});
  s.validate();
  return s;
}

EnforceDemoConfig enforce_from_json(const json& cfg) {
  EnforceDemoConfig e;
  const std::uint64_t seed = cfg.value("seed", std::uint64_t{0});
  e.source = cfg.value("source", e.source);
  const json blobs = cfg.value("blobs", json::object());
  e.blobs.n = blobs.value("n", e.blobs.n);
  e.blobs.separation = blobs.value("separation", e.blobs.separation);
  e.blobs.spread = blobs.value("spread", e.blobs.spread);
  e.blobs.seed = seed;
  const json idx = cfg.value("idx", json::object());
  e.idx_images = idx.value("images", std::string());
  e.idx_labels = idx.value("labels", std::string());
  if (idx.contains("count")) {
    e.idx_count = idx.at("count").is_null() ? std::nullopt : std::optional(idx.at("count").get<std::size_t>());
  }
  const json& net = cfg.at("network");
  e.hidden = net.value("hidden", e.hidden);
  e.activation = parse_activation(net.value("activation", std::string("tanh")));
  e.train = train_from_json(cfg.at("train"), seed);
  e.aux_weight = cfg.value("aux_weight", e.aux_weight);
  e.group_batch = cfg.value("group_batch", e.group_batch);
  e.validation_fraction = cfg.value("validation_fraction", e.validation_fraction);
  e.eval_every = cfg.value("eval_every", e.eval_every);
  e.threads = cfg.value("threads", std::size_t{0});
  e.validate();
  return e;
}

void write_manifest(const std::filesystem::path& dir, const Manifest& m) {
  const std::time_t t = std::chrono::system_clock::to_time_t(m.started);
  std::tm utc{};
  gmtime_r(&t, &utc);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", &utc);
  json j = {{"manifest_version", 1},
            {"tool", "gradsim"},
            {"version", kVersion},
            {"command", m.command},
            {"config", m.config},
            {"seeds", {{"seed", m.config.value("seed", std::uint64_t{0})}}},
            {"started_at", stamp},
            {"wall_clock_seconds", m.wall_clock_seconds},
            {"outputs", m.outputs},
            {"provenance", m.provenance}};
  std::ofstream os(dir / "manifest.json");
  os << j.dump(1) << '\n';
  if (!os) {
    throw FormatError("cannot write " + (dir / "manifest.json").string());
  }
}

} // namespace gradsim::cli
