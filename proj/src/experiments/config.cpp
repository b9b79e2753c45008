#include "bpt/experiments/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "bpt/common/error.hpp"
#include "bpt/nn/presets.hpp"

namespace bpt::experiments {

namespace {

constexpr ConfigKey kKeys[] = {
    {"preset", "network preset case1..case7"},
    {"input_size", "input image side length"},
    {"filter_divisor", "divides the preset's filters per conv layer"},
    {"fc_divisor", "divides the preset's hidden FC neurons"},
    {"filter_size", "conv filter side length"},
    {"learning_rate", "SGD learning rate"},
    {"format", "dataset format: idx or csv"},
    {"train_images", "IDX training images"},
    {"train_labels", "IDX training labels"},
    {"test_images", "IDX held-out images"},
    {"test_labels", "IDX held-out labels"},
    {"train_csv", "CSV training samples"},
    {"test_csv", "CSV held-out samples"},
    {"label_column", "CSV label column (negative counts from the end)"},
    {"classes", "class count"},
    {"train_limit", "use at most this many training samples (0 = all)"},
    {"test_limit", "use at most this many held-out samples (0 = all)"},
    {"workers", "worker count m"},
    {"strategy", "sgwu or agwu"},
    {"partition", "idpa or udpa"},
    {"batches", "IDPA batch count A"},
    {"iterations", "nominal iterations (epochs) K"},
    {"slowdown", "comma-separated per-worker slowdown factors"},
    {"frequency", "comma-separated per-worker nominal frequencies"},
    {"threads", "inner-parallel pool size per worker"},
    {"seed", "global seed"},
    {"unit_cost", "cost c_w of one weight-set transfer"},
    {"predictor", "IDPA time predictor: equal_finish or mean_rate"},
    {"time", "simulated or wall"},
    {"transport", "inprocess or socket"},
    {"address", "coordinator listen address"},
    {"port", "coordinator listen port (0 = any)"},
    {"external_workers", "wait for separately started worker processes (true/false)"},
    {"connect_timeout", "seconds to wait for worker connections"},
    {"version_capacity", "stored global versions (0 = 4 m)"},
    {"validation_cap", "maximum validation slice size"},
    {"seconds_per_mac", "simulated seconds per multiply-accumulate"},
    {"eval_limit", "held-out samples evaluated per epoch (0 = all)"},
    {"strategies", "matrix: comma-separated strategies"},
    {"partitions", "matrix: comma-separated partitionings"},
    {"scales", "matrix: comma-separated worker counts"},
    {"out", "output directory"},
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad(const std::string& key, const std::string& why) {
  throw ValidationError(key + ": " + why);
}

std::vector<std::string> list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream in(v);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T number(const std::string& key, const std::string& v) {
  T out{};
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) bad(key, "'" + v + "' is not a valid number");
  return out;
}

std::size_t count(const std::string& key, const std::string& v) {
  if (!v.empty() && v.front() == '-') bad(key, "must not be negative");
  return number<std::size_t>(key, v);
}

bool boolean(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad(key, "expected true or false, got '" + v + "'");
}

template <typename F>
auto wrap(const std::string& key, F&& f) {
  try {
    return f();
  } catch (const ValidationError& e) {
    const std::string what = e.what();
    if (what.rfind(key + ":", 0) == 0) throw;
    bad(key, what);
  }
}

void apply(ExperimentConfig& c, const std::string& key, const std::string& v) {
  auto& k = c.cluster;
  if (key == "preset") c.preset = v;
  else if (key == "input_size") c.input_size = count(key, v);
  else if (key == "filter_divisor") c.filter_divisor = count(key, v);
  else if (key == "fc_divisor") c.fc_divisor = count(key, v);
  else if (key == "filter_size") c.filter_size = count(key, v);
  else if (key == "learning_rate") c.learning_rate = number<double>(key, v);
  else if (key == "format") c.format = v;
  else if (key == "train_images") c.train_images = v;
  else if (key == "train_labels") c.train_labels = v;
  else if (key == "test_images") c.test_images = v;
  else if (key == "test_labels") c.test_labels = v;
  else if (key == "train_csv") c.train_csv = v;
  else if (key == "test_csv") c.test_csv = v;
  else if (key == "label_column") c.label_column = number<long>(key, v);
  else if (key == "classes") c.classes = count(key, v);
  else if (key == "train_limit") c.train_limit = count(key, v);
  else if (key == "test_limit") c.test_limit = count(key, v);
  else if (key == "workers") k.workers = count(key, v);
  else if (key == "strategy") k.strategy = wrap(key, [&] { return cluster::parse_strategy(v); });
  else if (key == "partition") k.partition = wrap(key, [&] { return cluster::parse_partitioning(v); });
  else if (key == "batches") k.batches = count(key, v);
  else if (key == "iterations") k.iterations = count(key, v);
  else if (key == "slowdown" || key == "frequency") {
    std::vector<double> xs;
    for (const auto& item : list(v)) xs.push_back(number<double>(key, item));
    (key == "slowdown" ? k.slowdown : k.frequency) = xs;
  } else if (key == "threads") k.pool_size = count(key, v);
  else if (key == "seed") k.seed = number<std::uint64_t>(key, v);
  else if (key == "unit_cost") k.unit_cost = number<double>(key, v);
  else if (key == "predictor") {
    if (v == "equal_finish") k.predictor = partition::Predictor::equal_finish;
    else if (v == "mean_rate") k.predictor = partition::Predictor::mean_rate;
    else bad(key, "expected equal_finish or mean_rate, got '" + v + "'");
  } else if (key == "time") k.time = wrap(key, [&] { return cluster::parse_time_mode(v); });
  else if (key == "transport") k.transport = wrap(key, [&] { return cluster::parse_transport(v); });
  else if (key == "address") k.address = v;
  else if (key == "port") {
    const auto p = count(key, v);
    if (p > 65535) bad(key, "must be at most 65535");
    k.port = static_cast<std::uint16_t>(p);
  } else if (key == "external_workers") k.external_workers = boolean(key, v);
  else if (key == "connect_timeout") k.connect_timeout = number<double>(key, v);
  else if (key == "version_capacity") k.version_capacity = count(key, v);
  else if (key == "validation_cap") k.validation_cap = count(key, v);
  else if (key == "seconds_per_mac") k.seconds_per_mac = number<double>(key, v);
  else if (key == "eval_limit") k.eval_limit = count(key, v);
  else if (key == "strategies") {
    c.strategies.clear();
    for (const auto& s : list(v)) c.strategies.push_back(wrap(key, [&] { return cluster::parse_strategy(s); }));
  } else if (key == "partitions") {
    c.partitions.clear();
    for (const auto& s : list(v)) c.partitions.push_back(wrap(key, [&] { return cluster::parse_partitioning(s); }));
  } else if (key == "scales") {
    c.scales.clear();
    for (const auto& s : list(v)) c.scales.push_back(count(key, s));
  } else if (key == "out") c.out = v;
  else bad(key, "unknown configuration key");
}

std::string join(const std::vector<double>& xs) {
  std::ostringstream out;
  out.precision(17);
  for (std::size_t k = 0; k < xs.size(); ++k) out << (k ? "," : "") << xs[k];
  return out.str();
}

}  // namespace

std::span<const ConfigKey> config_keys() { return kKeys; }

nn::NetworkSpec ExperimentConfig::network() const {
  nn::PresetScale scale;
  scale.input = nn::Shape3{1, input_size, input_size};
  scale.classes = classes;
  scale.filter_divisor = filter_divisor;
  scale.fc_divisor = fc_divisor;
  scale.filter_size = filter_size;
  scale.learning_rate = learning_rate;
  return nn::make_preset(preset, scale);
}

void ExperimentConfig::validate() const {
  wrap("preset", [&] { return nn::Network(network()).parameter_count(); });
  if (format != "idx" && format != "csv") bad("format", "expected idx or csv, got '" + format + "'");
  if (format == "csv" && train_csv.empty()) bad("train_csv", "required when format=csv");
  if (!(learning_rate > 0.0)) bad("learning_rate", "must be positive");
  if (classes < 2) bad("classes", "need at least two classes");
  const auto& k = cluster;
  if (k.partition == cluster::Partitioning::idpa && k.batches >= k.iterations) {
    bad("batches", "IDPA requires batches < iterations so that the remaining iteration count stays "
                   "positive (got batches=" + std::to_string(k.batches) + ", iterations=" +
                       std::to_string(k.iterations) + ")");
  }
  if (k.workers == 0) bad("workers", "must be at least 1");
  if (!k.slowdown.empty() && k.slowdown.size() != k.workers) {
    bad("slowdown", "needs one factor per worker (" + std::to_string(k.workers) + ")");
  }
  if (!k.frequency.empty() && k.frequency.size() != k.workers) {
    bad("frequency", "needs one value per worker (" + std::to_string(k.workers) + ")");
  }
  wrap("cluster", [&] {
    k.validate();
    return 0;
  });
  if (strategies.empty()) bad("strategies", "must name at least one strategy");
  if (partitions.empty()) bad("partitions", "must name at least one partitioning");
  for (std::size_t m : scales) {
    if (m == 0) bad("scales", "worker counts must be positive");
    if (!k.slowdown.empty() && m != k.workers) bad("scales", "slowdown factors fix the worker count");
  }
  if (out.empty()) bad("out", "must not be empty");
}

ConfigValues read_config_text(std::string_view text, std::string_view origin) {
  ConfigValues values;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    const std::string where = std::string(origin) + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw ValidationError(where + ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) throw ValidationError(where + ": missing key");
    if (values.count(key)) throw ValidationError(where + ": " + key + " given twice");
    values[key] = trim(t.substr(eq + 1));
  }
  return values;
}

ConfigValues read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read config " + path.string());
  std::stringstream text;
  text << in.rdbuf();
  return read_config_text(text.str(), path.string());
}

ExperimentConfig parse_config(const ConfigValues& file, const ConfigValues& overrides) {
  ExperimentConfig c;
  for (const auto* layer : {&file, &overrides}) {
    for (const auto& [key, value] : *layer) {
      apply(c, key, value);
      c.explicit_keys.insert(key);
    }
  }
  c.validate();
  return c;
}

std::string render_config(const ExperimentConfig& c) {
  const auto& k = c.cluster;
  auto names = [](const auto& xs) {
    std::string s;
    for (const auto& x : xs) s += (s.empty() ? "" : ",") + std::string(cluster::to_string(x));
    return s;
  };
  std::string scales;
  for (std::size_t m : c.scales) scales += (scales.empty() ? "" : ",") + std::to_string(m);
  std::ostringstream out;
  out.precision(17);
  out << "preset = " << c.preset << "\ninput_size = " << c.input_size
      << "\nfilter_divisor = " << c.filter_divisor << "\nfc_divisor = " << c.fc_divisor
      << "\nfilter_size = " << c.filter_size << "\nlearning_rate = " << c.learning_rate
      << "\nformat = " << c.format << "\ntrain_images = " << c.train_images
      << "\ntrain_labels = " << c.train_labels << "\ntest_images = " << c.test_images
      << "\ntest_labels = " << c.test_labels << "\ntrain_csv = " << c.train_csv
      << "\ntest_csv = " << c.test_csv << "\nlabel_column = " << c.label_column
      << "\nclasses = " << c.classes << "\ntrain_limit = " << c.train_limit
      << "\ntest_limit = " << c.test_limit << "\nworkers = " << k.workers
      << "\nstrategy = " << cluster::to_string(k.strategy)
      << "\npartition = " << cluster::to_string(k.partition) << "\nbatches = " << k.batches
      << "\niterations = " << k.iterations << "\nslowdown = " << join(k.slowdown)
      << "\nfrequency = " << join(k.frequency) << "\nthreads = " << k.pool_size
      << "\nseed = " << k.seed << "\nunit_cost = " << k.unit_cost << "\npredictor = "
      << (k.predictor == partition::Predictor::equal_finish ? "equal_finish" : "mean_rate")
      << "\ntime = " << cluster::to_string(k.time) << "\ntransport = " << cluster::to_string(k.transport)
      << "\naddress = " << k.address << "\nport = " << k.port
      << "\nexternal_workers = " << (k.external_workers ? "true" : "false")
      << "\nconnect_timeout = " << k.connect_timeout << "\nversion_capacity = " << k.version_capacity
      << "\nvalidation_cap = " << k.validation_cap << "\nseconds_per_mac = " << k.seconds_per_mac
      << "\neval_limit = " << k.eval_limit << "\nstrategies = " << names(c.strategies)
      << "\npartitions = " << names(c.partitions) << "\nscales = " << scales << "\nout = " << c.out
      << "\n";
  return out.str();
}

}  // namespace bpt::experiments
