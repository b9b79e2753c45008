#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bpt/cluster/runtime.hpp"
#include "bpt/nn/network.hpp"

namespace bpt::experiments {

struct ExperimentConfig {
  std::string preset = "case1";
  std::size_t input_size = 28;
  std::size_t filter_divisor = 1;
  std::size_t fc_divisor = 8;
  std::size_t filter_size = 5;
  double learning_rate = 0.05;

  std::string format = "idx";
  std::string train_images = "data/mnist-train-images.idx3-ubyte";
  std::string train_labels = "data/mnist-train-labels.idx1-ubyte";
  std::string test_images = "data/mnist-test-images.idx3-ubyte";
  std::string test_labels = "data/mnist-test-labels.idx1-ubyte";
  std::string train_csv;
  std::string test_csv;
  long label_column = -1;
  std::size_t classes = 10;
  std::size_t train_limit = 0;
  std::size_t test_limit = 0;

  cluster::ClusterConfig cluster;

  /// Combinations run by the matrix command; scales empty means {workers}.
  std::vector<cluster::Strategy> strategies{cluster::Strategy::sgwu, cluster::Strategy::agwu};
  std::vector<cluster::Partitioning> partitions{cluster::Partitioning::idpa, cluster::Partitioning::udpa};
  std::vector<std::size_t> scales;

  std::string out = "out";
  /// Keys given explicitly in the file or as flags.
  std::set<std::string> explicit_keys;

  nn::NetworkSpec network() const;
  void validate() const;
};

struct ConfigKey {
  std::string_view name;
  std::string_view help;
};

/// Every accepted key, in documentation order.
std::span<const ConfigKey> config_keys();

using ConfigValues = std::map<std::string, std::string>;

/// Flat "key = value" lines; '#' starts a comment; blank lines are ignored.
ConfigValues read_config_text(std::string_view text, std::string_view origin = "config");
ConfigValues read_config_file(const std::filesystem::path& path);

/// Applies `file` then `overrides` over the defaults and validates. Unknown
/// keys and bad values raise ValidationError naming the key.
ExperimentConfig parse_config(const ConfigValues& file, const ConfigValues& overrides = {});

/// key=value text of the effective configuration (every key).
std::string render_config(const ExperimentConfig& config);

}  // namespace bpt::experiments
