#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "wavesynth/iq.hpp"
#include "wavesynth/nn.hpp"
#include "wavesynth/random.hpp"

namespace wavesynth::classifier {

class TrainingFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Receiver front end. `modulation` summarises the constellation (amplitude
/// and axis histograms plus higher-order moments); `fingerprint` adds the mean
/// and second moment, which carry DC offset and I/Q imbalance.
enum class FeatureSet { modulation, fingerprint };

std::string to_string(FeatureSet f);
FeatureSet feature_set_from_string(const std::string& name);
std::size_t feature_count(FeatureSet f);

/// Integrate-and-dump over `sps` samples, RMS normalise, then summarise.
nn::Vector extract_features(const IqBuffer& x, unsigned sps, FeatureSet set);

struct ClassifierBundle {
  nn::Mlp net;  // features -> hidden -> softmax over classes
  std::vector<std::string> class_names;
  std::size_t input_len = 128;
  unsigned sps = 4;
  FeatureSet features = FeatureSet::modulation;
  std::string train_scenario;

  std::size_t num_classes() const noexcept { return class_names.size(); }
};

struct Feedback {
  std::size_t majority_label = 0;
  std::vector<double> mean_softmax;
  std::size_t batch_size = 0;
};

/// Softmax output for a single waveform. Throws std::invalid_argument on a
/// length mismatch.
std::vector<double> predict(const ClassifierBundle& bundle, const IqBuffer& x);

/// Majority vote of per-waveform argmax (ties to the lowest class index) and
/// the arithmetic mean of the softmax vectors.
Feedback classify_batch(const ClassifierBundle& bundle, std::span<const IqBuffer> batch);

/// Produces one received waveform of class `label`, drawing from `rng`.
using DatasetGenerator = std::function<IqBuffer(std::size_t label, Rng& rng)>;

struct TrainConfig {
  std::size_t num_train = 30000;
  std::size_t num_validation = 3000;
  std::size_t epochs = 15;
  std::size_t batch_size = 64;
  std::size_t hidden = 64;
  double learning_rate = 1e-3;
  double min_validation_accuracy = 0.80;
  std::uint64_t seed = 1;
};

struct TrainResult {
  ClassifierBundle bundle;
  double validation_accuracy = 0.0;
  std::vector<double> per_class_accuracy;
};

struct BundleSpec {
  std::vector<std::string> class_names;
  std::size_t input_len = 128;
  unsigned sps = 4;
  FeatureSet features = FeatureSet::modulation;
  std::string train_scenario;
};

/// Labels are balanced round-robin. Throws TrainingFailure if the held-out
/// accuracy ends below `min_validation_accuracy`.
TrainResult train_classifier(const DatasetGenerator& generator, const BundleSpec& spec, const TrainConfig& config);

/// Per-class single-waveform accuracy over `per_class` fresh examples each.
std::vector<double> evaluate_per_class(const ClassifierBundle& bundle, const DatasetGenerator& generator,
                                       std::size_t per_class, std::uint64_t seed);

/// Writes `<dir>/classifier.chnn` and the `<dir>/classifier.json` sidecar.
void save_bundle(const std::string& dir, const ClassifierBundle& bundle);
ClassifierBundle load_bundle(const std::string& dir);

}  // namespace wavesynth::classifier
