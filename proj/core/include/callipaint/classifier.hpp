#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "callipaint/corpus.hpp"
#include "callipaint/image.hpp"
#include "callipaint/params.hpp"

namespace callipaint {

struct ClassifierConfig {
  Resolution resolution{32, 32};
  int channels1 = 16;
  int channels2 = 32;
  int n_script = 1;
  int n_character = 1;

  void validate() const;
  friend bool operator==(const ClassifierConfig&, const ClassifierConfig&) = default;
};

struct ClassifierLayout;

// Two conv blocks (conv3x3, SiLU, 2x2 average pool) feeding a script head
// and a character head.
class Classifier {
 public:
  Classifier() = default;
  Classifier(ClassifierConfig config, ParamStore store, Vocabularies vocab);

  const ClassifierConfig& config() const { return config_; }
  const ParamStore& store() const { return store_; }
  ParamStore& store() { return store_; }
  const Vocabularies& vocab() const { return vocab_; }
  const ClassifierLayout& layout() const { return *layout_; }

  double val_script_accuracy = 0.0;
  double val_character_accuracy = 0.0;
  double final_loss = 0.0;

  friend bool operator==(const Classifier& a, const Classifier& b) {
    return a.config_ == b.config_ && a.store_ == b.store_ && a.vocab_ == b.vocab_;
  }

 private:
  ClassifierConfig config_;
  ParamStore store_;
  Vocabularies vocab_;
  std::shared_ptr<const ClassifierLayout> layout_;
};

struct ClassifierTrainConfig {
  int epochs = 150;
  double lr = 1e-3;
  int batch = 16;
  std::uint64_t seed = 0;
  // Stop early once an epoch's mean loss falls below this value.
  double target_loss = 0.0;
};

struct Prediction {
  std::vector<double> script;
  std::vector<double> character;

  int script_argmax() const;
  int character_argmax() const;
};

// Requires every script and character id to occur in `train_set`.
Classifier train_classifier(const std::vector<Example>& train_set,
                            const std::vector<Example>& val_set,
                            const Vocabularies& vocab,
                            const ClassifierTrainConfig& config,
                            ClassifierConfig arch = {});

Prediction classify(const Classifier& clf, const GlyphImage& image);

// Sum of the two heads' cross-entropies, averaged over the batch, with its
// gradient. Exposed for gradient checking.
template <typename Real>
Real classifier_loss(const Classifier& clf, std::span<const Real> theta,
                     const std::vector<Example>& batch, std::vector<Real>* grad);

struct HeadAccuracy {
  double script = 0.0;
  double character = 0.0;
};
HeadAccuracy evaluate_classifier(const Classifier& clf,
                                 const std::vector<Example>& data);

void save_classifier(const Classifier& clf, const std::filesystem::path& path);
Classifier load_classifier(const std::filesystem::path& path);

}  // namespace callipaint
