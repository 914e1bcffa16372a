#include "wavesynth/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "json.hpp"

namespace wavesynth::classifier {

namespace {

constexpr int kBins = 16;
constexpr std::size_t kModulationFeatures = 3 * kBins + 5;
constexpr std::size_t kFingerprintExtra = 4;

void histogram(nn::Vector& out, Eigen::Index offset, const std::vector<double>& values, double lo, double hi) {
  const double inv_n = 1.0 / static_cast<double>(values.size());
  for (double v : values) {
    int idx = static_cast<int>(std::floor((v - lo) / (hi - lo) * kBins));
    idx = std::clamp(idx, 0, kBins - 1);
    out(offset + idx) += inv_n;
  }
}

nn::Matrix features_of(const std::vector<IqBuffer>& xs, unsigned sps, FeatureSet set) {
  nn::Matrix f(static_cast<Eigen::Index>(feature_count(set)), static_cast<Eigen::Index>(xs.size()));
  for (std::size_t i = 0; i < xs.size(); ++i) f.col(static_cast<Eigen::Index>(i)) = extract_features(xs[i], sps, set);
  return f;
}

}  // namespace

std::string to_string(FeatureSet f) { return f == FeatureSet::modulation ? "modulation" : "fingerprint"; }

FeatureSet feature_set_from_string(const std::string& name) {
  if (name == "modulation") return FeatureSet::modulation;
  if (name == "fingerprint") return FeatureSet::fingerprint;
  throw std::invalid_argument("unknown feature set: " + name);
}

std::size_t feature_count(FeatureSet f) {
  return f == FeatureSet::modulation ? kModulationFeatures : kModulationFeatures + kFingerprintExtra;
}

nn::Vector extract_features(const IqBuffer& x, unsigned sps, FeatureSet set) {
  if (sps == 0 || x.empty() || x.size() % sps != 0) {
    throw std::invalid_argument("extract_features: length must be a positive multiple of sps");
  }
  const std::size_t symbols = x.size() / sps;
  std::vector<Complex> r(symbols);
  for (std::size_t s = 0; s < symbols; ++s) {
    Complex acc{};
    for (unsigned k = 0; k < sps; ++k) acc += x[s * sps + k];
    r[s] = acc / static_cast<double>(sps);
  }
  double power = 0.0;
  for (const auto& v : r) power += std::norm(v);
  power /= static_cast<double>(symbols);
  const double scale = power > 0.0 ? 1.0 / std::sqrt(power) : 1.0;
  for (auto& v : r) v *= scale;

  std::vector<double> mag(symbols), re(symbols), im(symbols);
  Complex mean{}, m2{}, m4{};
  double a4 = 0.0, a6 = 0.0, im2 = 0.0;
  for (std::size_t s = 0; s < symbols; ++s) {
    mag[s] = std::abs(r[s]);
    re[s] = r[s].real();
    im[s] = r[s].imag();
    const double a2 = std::norm(r[s]);
    a4 += a2 * a2;
    a6 += a2 * a2 * a2;
    im2 += im[s] * im[s];
    const Complex sq = r[s] * r[s];
    mean += r[s];
    m2 += sq;
    m4 += sq * sq;
  }
  const double inv = 1.0 / static_cast<double>(symbols);

  nn::Vector f = nn::Vector::Zero(static_cast<Eigen::Index>(feature_count(set)));
  histogram(f, 0, mag, 0.0, 2.0);
  histogram(f, kBins, re, -2.0, 2.0);
  histogram(f, 2 * kBins, im, -2.0, 2.0);
  Eigen::Index k = 3 * kBins;
  f(k++) = a4 * inv - 1.0;
  f(k++) = a6 * inv / 5.0;
  f(k++) = std::abs(m2 * inv);
  f(k++) = im2 * inv;
  f(k++) = std::abs(m4 * inv);
  if (set == FeatureSet::fingerprint) {
    f(k++) = (mean * inv).real();
    f(k++) = (mean * inv).imag();
    f(k++) = (m2 * inv).real();
    f(k++) = (m2 * inv).imag();
  }
  return f;
}

std::vector<double> predict(const ClassifierBundle& bundle, const IqBuffer& x) {
  if (x.size() != bundle.input_len) {
    throw std::invalid_argument("classifier: waveform length " + std::to_string(x.size()) + ", expected " +
                                std::to_string(bundle.input_len));
  }
  const nn::Vector p = bundle.net.forward_single(extract_features(x, bundle.sps, bundle.features));
  return {p.data(), p.data() + p.size()};
}

Feedback classify_batch(const ClassifierBundle& bundle, std::span<const IqBuffer> batch) {
  if (batch.empty()) throw std::invalid_argument("classify_batch: empty batch");
  nn::Matrix f(static_cast<Eigen::Index>(feature_count(bundle.features)), static_cast<Eigen::Index>(batch.size()));
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i].size() != bundle.input_len) {
      throw std::invalid_argument("classify_batch: waveform " + std::to_string(i) + " has length " +
                                  std::to_string(batch[i].size()) + ", expected " +
                                  std::to_string(bundle.input_len));
    }
    f.col(static_cast<Eigen::Index>(i)) = extract_features(batch[i], bundle.sps, bundle.features);
  }
  const nn::Matrix p = bundle.net.forward(f);
  const std::size_t classes = static_cast<std::size_t>(p.rows());
  std::vector<std::size_t> votes(classes, 0);
  Feedback fb;
  fb.batch_size = batch.size();
  fb.mean_softmax.assign(classes, 0.0);
  for (Eigen::Index c = 0; c < p.cols(); ++c) {
    Eigen::Index arg = 0;
    for (Eigen::Index k = 1; k < p.rows(); ++k) {
      if (p(k, c) > p(arg, c)) arg = k;
    }
    ++votes[static_cast<std::size_t>(arg)];
    for (std::size_t k = 0; k < classes; ++k) fb.mean_softmax[k] += p(static_cast<Eigen::Index>(k), c);
  }
  for (auto& v : fb.mean_softmax) v /= static_cast<double>(batch.size());
  fb.majority_label = static_cast<std::size_t>(std::max_element(votes.begin(), votes.end()) - votes.begin());
  return fb;
}

TrainResult train_classifier(const DatasetGenerator& generator, const BundleSpec& spec, const TrainConfig& config) {
  const std::size_t classes = spec.class_names.size();
  if (classes < 2) throw std::invalid_argument("train_classifier: need at least two classes");
  if (config.num_train == 0 || config.num_validation == 0 || config.batch_size == 0 || config.epochs == 0) {
    throw std::invalid_argument("train_classifier: sizes must be positive");
  }

  auto make_set = [&](std::size_t n, std::uint64_t tag, std::vector<std::size_t>& labels) {
    std::vector<IqBuffer> xs;
    xs.reserve(n);
    labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      labels[i] = i % classes;
      Rng rng = make_rng(config.seed, {tag, i});
      xs.push_back(generator(labels[i], rng));
      if (xs.back().size() != spec.input_len) throw std::invalid_argument("train_classifier: generator length mismatch");
    }
    return features_of(xs, spec.sps, spec.features);
  };
  std::vector<std::size_t> train_labels, val_labels;
  const nn::Matrix train_x = make_set(config.num_train, tag_of("train"), train_labels);
  const nn::Matrix val_x = make_set(config.num_validation, tag_of("validation"), val_labels);

  ClassifierBundle bundle;
  bundle.class_names = spec.class_names;
  bundle.input_len = spec.input_len;
  bundle.sps = spec.sps;
  bundle.features = spec.features;
  bundle.train_scenario = spec.train_scenario;
  bundle.net = nn::Mlp({feature_count(spec.features), config.hidden, config.hidden, classes},
                       {nn::Activation::ReLU, nn::Activation::ReLU, nn::Activation::Softmax},
                       derive_seed(config.seed, {tag_of("init")}));
  auto adam = nn::make_adam(bundle.net, config.learning_rate);

  Rng shuffle_rng = make_rng(config.seed, {tag_of("shuffle")});
  std::vector<std::size_t> order(config.num_train);
  std::iota(order.begin(), order.end(), 0);
  const auto nf = train_x.rows();
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const auto b = static_cast<Eigen::Index>(end - start);
      nn::Matrix xb(nf, b);
      for (Eigen::Index j = 0; j < b; ++j) xb.col(j) = train_x.col(static_cast<Eigen::Index>(order[start + j]));
      const auto cache = bundle.net.forward_cached(xb);
      // Mean cross-entropy: dL/dlogits = (p - onehot) / B.
      nn::Matrix grad = cache.output;
      for (Eigen::Index j = 0; j < b; ++j) grad(static_cast<Eigen::Index>(train_labels[order[start + j]]), j) -= 1.0;
      grad /= static_cast<double>(b);
      nn::adam_step(bundle.net, bundle.net.backward(cache, grad, nn::OutputGrad::wrt_logits), adam);
    }
  }

  TrainResult result;
  const nn::Matrix p = bundle.net.forward(val_x);
  std::vector<std::size_t> hits(classes, 0), totals(classes, 0);
  std::size_t correct = 0;
  for (Eigen::Index c = 0; c < p.cols(); ++c) {
    Eigen::Index arg = 0;
    for (Eigen::Index k = 1; k < p.rows(); ++k) {
      if (p(k, c) > p(arg, c)) arg = k;
    }
    const auto label = val_labels[static_cast<std::size_t>(c)];
    ++totals[label];
    if (static_cast<std::size_t>(arg) == label) {
      ++hits[label];
      ++correct;
    }
  }
  result.validation_accuracy = static_cast<double>(correct) / static_cast<double>(config.num_validation);
  for (std::size_t k = 0; k < classes; ++k) {
    result.per_class_accuracy.push_back(totals[k] ? static_cast<double>(hits[k]) / static_cast<double>(totals[k]) : 0.0);
  }
  if (result.validation_accuracy < config.min_validation_accuracy) {
    throw TrainingFailure("train_classifier: validation accuracy " + std::to_string(result.validation_accuracy) +
                          " below gate " + std::to_string(config.min_validation_accuracy));
  }
  result.bundle = std::move(bundle);
  return result;
}

std::vector<double> evaluate_per_class(const ClassifierBundle& bundle, const DatasetGenerator& generator,
                                       std::size_t per_class, std::uint64_t seed) {
  std::vector<double> acc;
  for (std::size_t label = 0; label < bundle.num_classes(); ++label) {
    std::vector<IqBuffer> xs;
    xs.reserve(per_class);
    for (std::size_t i = 0; i < per_class; ++i) {
      Rng rng = make_rng(seed, {tag_of("evaluate"), label, i});
      xs.push_back(generator(label, rng));
    }
    const nn::Matrix p = bundle.net.forward(features_of(xs, bundle.sps, bundle.features));
    std::size_t hits = 0;
    for (Eigen::Index c = 0; c < p.cols(); ++c) {
      Eigen::Index arg = 0;
      for (Eigen::Index k = 1; k < p.rows(); ++k) {
        if (p(k, c) > p(arg, c)) arg = k;
      }
      hits += static_cast<std::size_t>(arg) == label ? 1 : 0;
    }
    acc.push_back(static_cast<double>(hits) / static_cast<double>(per_class));
  }
  return acc;
}

void save_bundle(const std::string& dir, const ClassifierBundle& bundle) {
  std::filesystem::create_directories(dir);
  nn::save_mlp(dir + "/classifier.chnn", bundle.net);
  nlohmann::ordered_json meta;
  meta["class_names"] = bundle.class_names;
  meta["input_len"] = bundle.input_len;
  meta["sps"] = bundle.sps;
  meta["features"] = to_string(bundle.features);
  meta["train_scenario"] = bundle.train_scenario;
  std::ofstream out(dir + "/classifier.json");
  if (!out) throw std::runtime_error("save_bundle: cannot write sidecar in " + dir);
  out << meta.dump(2) << "\n";
}

ClassifierBundle load_bundle(const std::string& dir) {
  std::ifstream in(dir + "/classifier.json");
  if (!in) throw std::runtime_error("load_bundle: missing " + dir + "/classifier.json");
  const auto meta = nlohmann::json::parse(in);
  ClassifierBundle b;
  b.net = nn::load_mlp(dir + "/classifier.chnn");
  b.class_names = meta.at("class_names").get<std::vector<std::string>>();
  b.input_len = meta.at("input_len").get<std::size_t>();
  b.sps = meta.at("sps").get<unsigned>();
  b.features = feature_set_from_string(meta.at("features").get<std::string>());
  b.train_scenario = meta.at("train_scenario").get<std::string>();
  if (b.net.input_dim() != feature_count(b.features) || b.net.output_dim() != b.class_names.size()) {
    throw std::runtime_error("load_bundle: checkpoint does not match sidecar");
  }
  return b;
}

}  // namespace wavesynth::classifier
