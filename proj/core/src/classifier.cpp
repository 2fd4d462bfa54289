#include "callipaint/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "binary_io.hpp"
#include "callipaint/error.hpp"
#include "callipaint/png_io.hpp"
#include "callipaint/rng.hpp"
#include "nn_kernels.hpp"

namespace callipaint {

struct ClassifierLayout {
  nn::LayoutBuilder builder;
  nn::ConvP conv1, conv2;
  nn::LinP head_script, head_character;
  int features = 0;
};

namespace {

// Shift is a fraction of the image side.
constexpr double kShiftAugment = 1.0 / 16.0;
constexpr double kScaleAugment = 0.12;
constexpr double kRotateAugment = 0.12;

std::shared_ptr<const ClassifierLayout> build_layout(const ClassifierConfig& c) {
  c.validate();
  auto l = std::make_shared<ClassifierLayout>();
  l->conv1 = nn::add_conv(l->builder, "conv1", 1, c.channels1, 3);
  l->conv2 = nn::add_conv(l->builder, "conv2", c.channels1, c.channels2, 3);
  l->features = c.channels2 * (c.resolution.height / 4) * (c.resolution.width / 4);
  l->head_script = nn::add_linear(l->builder, "head.script", l->features, c.n_script);
  l->head_character =
      nn::add_linear(l->builder, "head.character", l->features, c.n_character);
  return l;
}

// Softmax cross-entropy; writes d(loss)/d(logits) scaled by `scale`.
template <typename Real>
Real cross_entropy(const std::vector<Real>& logits, int target, Real scale,
                   std::vector<Real>& dlogits) {
  const Real mx = *std::max_element(logits.begin(), logits.end());
  Real z = 0;
  dlogits.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    dlogits[i] = std::exp(logits[i] - mx);
    z += dlogits[i];
  }
  for (auto& d : dlogits) d /= z;
  const Real loss = -(logits[target] - mx - std::log(z));
  dlogits[target] -= Real(1);
  for (auto& d : dlogits) d *= scale;
  return loss;
}

template <typename Real>
struct Forward {
  nn::FMap<Real> x, a1, s1, p1, a2, s2, p2;
  std::vector<Real> script, character;
};

template <typename Real>
void forward(const ClassifierLayout& l, const ClassifierConfig& c,
             const Real* theta, const GlyphImage& image, Forward<Real>& f) {
  f.x = nn::FMap<Real>(1, c.resolution.height, c.resolution.width);
  for (std::size_t i = 0; i < image.pixels.size(); ++i)
    f.x.data[i] = static_cast<Real>(image.pixels[i]);
  f.a1 = nn::conv_forward(l.conv1, theta, f.x);
  f.s1 = nn::FMap<Real>(f.a1.c, f.a1.h, f.a1.w);
  nn::silu_forward(f.a1.data, f.s1.data);
  f.p1 = nn::avgpool2(f.s1);
  f.a2 = nn::conv_forward(l.conv2, theta, f.p1);
  f.s2 = nn::FMap<Real>(f.a2.c, f.a2.h, f.a2.w);
  nn::silu_forward(f.a2.data, f.s2.data);
  f.p2 = nn::avgpool2(f.s2);
  f.script = nn::linear_forward(l.head_script, theta, f.p2.data);
  f.character = nn::linear_forward(l.head_character, theta, f.p2.data);
}

std::vector<double> softmax(const std::vector<float>& logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) z += p[i] = std::exp(logits[i] - mx);
  for (auto& v : p) v /= z;
  return p;
}

// Random similarity transform about the centre, bilinear, white background fill.
GlyphImage augmented(const GlyphImage& img, Rng& rng) {
  const int h = img.resolution.height, w = img.resolution.width;
  const double scale = 1.0 + kScaleAugment * (2.0 * rng.uniform() - 1.0);
  const double angle = kRotateAugment * (2.0 * rng.uniform() - 1.0);
  const double ty = kShiftAugment * h * (2.0 * rng.uniform() - 1.0);
  const double tx = kShiftAugment * w * (2.0 * rng.uniform() - 1.0);
  const double c = std::cos(angle) / scale, s = std::sin(angle) / scale;
  const double cy = 0.5 * (h - 1), cx = 0.5 * (w - 1);
  auto at = [&](int y, int x) -> double {
    return (y < 0 || y >= h || x < 0 || x >= w) ? 1.0
                                                : img.pixels[std::size_t(y) * w + x];
  };
  GlyphImage out = img;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double u = y - cy - ty, v = x - cx - tx;
      const double sy = c * u - s * v + cy, sx = s * u + c * v + cx;
      const int y0 = int(std::floor(sy)), x0 = int(std::floor(sx));
      const double fy = sy - y0, fx = sx - x0;
      out.pixels[std::size_t(y) * w + x] = float(
          (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) +
          fy * ((1 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1)));
    }
  return out;
}

nlohmann::json vocab_to_json(const Vocabularies& v) {
  return {{"character", v.character}, {"script", v.script}, {"style", v.style}};
}

}  // namespace

void ClassifierConfig::validate() const {
  require(resolution.height >= 4 && resolution.width >= 4 &&
              resolution.height % 4 == 0 && resolution.width % 4 == 0,
          ErrorKind::kInvalidArgument, "classifier resolution must be a multiple of 4");
  require(channels1 > 0 && channels2 > 0, ErrorKind::kInvalidArgument,
          "classifier channel counts must be positive");
  require(n_script > 0 && n_character > 0, ErrorKind::kVocabulary,
          "classifier needs at least one script and one character");
}

Classifier::Classifier(ClassifierConfig config, ParamStore store, Vocabularies vocab)
    : config_(config), store_(std::move(store)), vocab_(std::move(vocab)) {
  layout_ = build_layout(config_);
  require(int(vocab_.script.size()) == config_.n_script &&
              int(vocab_.character.size()) == config_.n_character,
          ErrorKind::kVocabulary, "classifier vocabulary does not match its heads");
  require(store_.tensors == layout_->builder.tensors &&
              store_.values.size() == layout_->builder.total,
          ErrorKind::kShapeMismatch, "classifier parameters do not match the layout");
}

int Prediction::script_argmax() const {
  return int(std::max_element(script.begin(), script.end()) - script.begin());
}
int Prediction::character_argmax() const {
  return int(std::max_element(character.begin(), character.end()) - character.begin());
}

template <typename Real>
Real classifier_loss(const Classifier& clf, std::span<const Real> theta,
                     const std::vector<Example>& batch, std::vector<Real>* grad) {
  const auto& l = clf.layout();
  const auto& c = clf.config();
  require(theta.size() == l.builder.total, ErrorKind::kShapeMismatch,
          "parameter vector has the wrong length");
  require(!batch.empty(), ErrorKind::kInvalidArgument, "empty batch");
  if (grad) grad->assign(theta.size(), Real(0));
  const Real scale = Real(1) / Real(batch.size());
  Real total = 0;
  Forward<Real> f;
  std::vector<Real> ds, dc;
  for (const auto& ex : batch) {
    require(ex.image.resolution == c.resolution, ErrorKind::kShapeMismatch,
            "image resolution does not match the classifier");
    require(ex.label.script >= 0 && ex.label.script < c.n_script &&
                ex.label.character >= 0 && ex.label.character < c.n_character,
            ErrorKind::kVocabulary, "label outside the classifier vocabulary");
    forward(l, c, theta.data(), ex.image, f);
    total += scale * (cross_entropy(f.script, ex.label.script, scale, ds) +
                      cross_entropy(f.character, ex.label.character, scale, dc));
    if (!grad) continue;
    Real* g = grad->data();
    auto dp = nn::linear_backward(l.head_script, theta.data(), f.p2.data, ds, g);
    auto dp2 = nn::linear_backward(l.head_character, theta.data(), f.p2.data, dc, g);
    for (std::size_t i = 0; i < dp.size(); ++i) dp[i] += dp2[i];
    nn::FMap<Real> dP2(f.p2.c, f.p2.h, f.p2.w);
    dP2.data = std::move(dp);
    auto dS2 = nn::avgpool2_backward(dP2);
    nn::silu_backward(f.a2.data, dS2.data);
    auto dP1 = nn::conv_backward(l.conv2, theta.data(), f.p1, dS2, g);
    auto dS1 = nn::avgpool2_backward(dP1);
    nn::silu_backward(f.a1.data, dS1.data);
    nn::conv_backward(l.conv1, theta.data(), f.x, dS1, g, false);
  }
  return total;
}

template float classifier_loss<float>(const Classifier&, std::span<const float>,
                                      const std::vector<Example>&, std::vector<float>*);
template double classifier_loss<double>(const Classifier&, std::span<const double>,
                                        const std::vector<Example>&,
                                        std::vector<double>*);

Prediction classify(const Classifier& clf, const GlyphImage& image) {
  image.validate();
  require(image.range == PixelRange::kModel, ErrorKind::kInvalidArgument,
          "classifier expects model-range pixels");
  require(image.resolution == clf.config().resolution, ErrorKind::kShapeMismatch,
          "image resolution does not match the classifier");
  Forward<float> f;
  forward(clf.layout(), clf.config(), clf.store().values.data(), image, f);
  return {softmax(f.script), softmax(f.character)};
}

HeadAccuracy evaluate_classifier(const Classifier& clf, const std::vector<Example>& data) {
  HeadAccuracy acc;
  if (data.empty()) return acc;
  for (const auto& ex : data) {
    const auto p = classify(clf, ex.image);
    acc.script += p.script_argmax() == ex.label.script;
    acc.character += p.character_argmax() == ex.label.character;
  }
  acc.script /= double(data.size());
  acc.character /= double(data.size());
  return acc;
}

Classifier train_classifier(const std::vector<Example>& train_set,
                            const std::vector<Example>& val_set,
                            const Vocabularies& vocab,
                            const ClassifierTrainConfig& config,
                            ClassifierConfig arch) {
  require(!train_set.empty(), ErrorKind::kInvalidArgument, "empty training set");
  require(config.epochs > 0 && config.batch > 0 && config.lr > 0,
          ErrorKind::kInvalidArgument, "epochs, batch and lr must be positive");
  arch.n_script = int(vocab.script.size());
  arch.n_character = int(vocab.character.size());
  arch.resolution = train_set.front().image.resolution;

  std::vector<char> seen_script(arch.n_script, 0), seen_char(arch.n_character, 0);
  for (const auto& ex : train_set) {
    vocab.check(ex.label);
    seen_script[ex.label.script] = 1;
    seen_char[ex.label.character] = 1;
  }
  for (int i = 0; i < arch.n_script; ++i)
    require(seen_script[i], ErrorKind::kVocabulary,
            "script '" + vocab.script[i] + "' has no training example");
  for (int i = 0; i < arch.n_character; ++i)
    require(seen_char[i], ErrorKind::kVocabulary,
            "character '" + vocab.character[i] + "' has no training example");

  auto layout = build_layout(arch);
  Classifier clf(arch, nn::materialize(layout->builder, config.seed, "classifier.init."),
                 vocab);
  Adam adam(clf.store().count(), AdamConfig{config.lr});
  // Examples of rarer scripts are repeated so each script gets a similar
  // share of every epoch.
  std::vector<int> script_count(arch.n_script, 0);
  for (const auto& ex : train_set) ++script_count[ex.label.script];
  const int most = *std::max_element(script_count.begin(), script_count.end());
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < train_set.size(); ++i) {
    const int copies = (most + script_count[train_set[i].label.script] / 2) /
                       script_count[train_set[i].label.script];
    pool.insert(pool.end(), std::size_t(std::max(copies, 1)), i);
  }
  std::vector<std::size_t> order(pool.size());
  std::vector<float> grad;
  std::vector<Example> batch;
  double epoch_loss = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    order = pool;
    Rng rng = Rng::substream(config.seed, "classifier.shuffle", epoch);
    std::shuffle(order.begin(), order.end(), rng.engine());
    epoch_loss = 0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch) {
      batch.clear();
      for (std::size_t i = start; i < std::min(order.size(), start + config.batch); ++i) {
        Example ex = train_set[order[i]];
        if (train_set.size() > 1) ex.image = augmented(ex.image, rng);
        batch.push_back(std::move(ex));
      }
      epoch_loss += classifier_loss<float>(clf, clf.store().values, batch, &grad);
      adam.step(clf.store().values, grad);
      ++batches;
    }
    epoch_loss /= double(batches);
    if (epoch_loss < config.target_loss) break;
  }
  require(clf.store().all_finite(), ErrorKind::kNonFinite,
          "classifier training diverged (seed " + std::to_string(config.seed) + ")");
  clf.final_loss = classifier_loss<float>(clf, clf.store().values, train_set, nullptr);
  if (!val_set.empty()) {
    const auto acc = evaluate_classifier(clf, val_set);
    clf.val_script_accuracy = acc.script;
    clf.val_character_accuracy = acc.character;
  }
  return clf;
}

void save_classifier(const Classifier& clf, const std::filesystem::path& path) {
  const auto& c = clf.config();
  nlohmann::json meta = {{"height", c.resolution.height},
                         {"width", c.resolution.width},
                         {"channels1", c.channels1},
                         {"channels2", c.channels2},
                         {"vocab", vocab_to_json(clf.vocab())},
                         {"val_script_accuracy", clf.val_script_accuracy},
                         {"val_character_accuracy", clf.val_character_accuracy},
                         {"final_loss", clf.final_loss}};
  io::Writer w;
  w.bytes("CCLS", 4);
  w.u32(1);
  w.str(meta.dump());
  w.u64(clf.store().values.size());
  w.bytes(clf.store().values.data(), clf.store().values.size() * sizeof(float));
  write_file_bytes(path, w.out);
}

Classifier load_classifier(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  io::Cursor cur(bytes, "classifier");
  char magic[4];
  cur.bytes(magic, 4);
  require(std::memcmp(magic, "CCLS", 4) == 0, ErrorKind::kFormat,
          "not a classifier file (bad magic)");
  const auto version = cur.u32();
  require(version == 1, ErrorKind::kVersionMismatch,
          "unsupported classifier version " + std::to_string(version));
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(cur.str());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, std::string("classifier metadata: ") + e.what());
  }
  Vocabularies vocab;
  ClassifierConfig c;
  try {
    vocab.character = meta.at("vocab").at("character").get<std::vector<std::string>>();
    vocab.script = meta.at("vocab").at("script").get<std::vector<std::string>>();
    vocab.style = meta.at("vocab").at("style").get<std::vector<std::string>>();
    c.resolution = {meta.at("height").get<int>(), meta.at("width").get<int>()};
    c.channels1 = meta.at("channels1").get<int>();
    c.channels2 = meta.at("channels2").get<int>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, std::string("classifier metadata: ") + e.what());
  }
  c.n_script = int(vocab.script.size());
  c.n_character = int(vocab.character.size());
  auto layout = build_layout(c);
  ParamStore store;
  store.tensors = layout->builder.tensors;
  const auto n = cur.u64();
  require(n == layout->builder.total, ErrorKind::kShapeMismatch,
          "classifier parameter count does not match its metadata");
  store.values.resize(n);
  cur.bytes(store.values.data(), n * sizeof(float));
  require(cur.at_end(), ErrorKind::kFormat, "trailing bytes after classifier data");
  require(store.all_finite(), ErrorKind::kNonFinite, "classifier has non-finite weights");
  Classifier clf(c, std::move(store), std::move(vocab));
  clf.val_script_accuracy = meta.value("val_script_accuracy", 0.0);
  clf.val_character_accuracy = meta.value("val_character_accuracy", 0.0);
  clf.final_loss = meta.value("final_loss", 0.0);
  return clf;
}

}  // namespace callipaint
