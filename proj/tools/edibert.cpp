#include <CLI11.hpp>
#include <climits>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "edibert/data.hpp"
#include "edibert/errors.hpp"
#include "edibert/kvfile.hpp"
#include "edibert/metrics.hpp"
#include "edibert/model.hpp"
#include "edibert/sampler.hpp"

namespace fs = std::filesystem;
using namespace edibert;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <class T>
T parse_value(const std::string& s);

template <>
std::string parse_value<std::string>(const std::string& s) { return s; }

template <>
int parse_value<int>(const std::string& s) {
  size_t pos = 0;
  long long v = 0;
  try { v = std::stoll(s, &pos); } catch (...) { pos = 0; }
  if (pos != s.size() || v < INT_MIN || v > INT_MAX)
    throw FormatError("config: not an integer: '" + s + "'");
  return static_cast<int>(v);
}

template <>
uint64_t parse_value<uint64_t>(const std::string& s) {
  size_t pos = 0;
  uint64_t v = 0;
  try { v = std::stoull(s, &pos); } catch (...) { pos = 0; }
  if (pos != s.size()) throw FormatError("config: not an integer: '" + s + "'");
  return v;
}

template <>
float parse_value<float>(const std::string& s) {
  size_t pos = 0;
  float v = 0;
  try { v = std::stof(s, &pos); } catch (...) { pos = 0; }
  if (pos != s.size()) throw FormatError("config: not a number: '" + s + "'");
  return v;
}

// Per-command flag set that can also be fed from a `key = value` config file.
// Command-line flags win; unknown config keys are rejected.
struct FlagSet {
  CLI::App* sub = nullptr;
  std::string config_path;
  int threads = 1;

  struct Binding {
    std::string key;
    CLI::Option* opt;
    std::function<void(const std::string&)> apply;
  };
  std::vector<Binding> binds;

  explicit FlagSet(CLI::App* s) : sub(s) {
    sub->add_option("--config", config_path,
                    "key = value file; explicit flags override it");
    add("--threads", threads, "worker thread cap");
  }

  template <class T>
  CLI::Option* add(const std::string& flag, T& var, const std::string& desc) {
    CLI::Option* o = sub->add_option(flag, var, desc)->capture_default_str();
    binds.push_back({flag.substr(2), o,
                     [&var](const std::string& s) { var = parse_value<T>(s); }});
    return o;
  }

  void load_config() {
    if (config_path.empty()) return;
    for (const auto& [key, value] : read_kv(config_path)) {
      Binding* hit = nullptr;
      for (auto& b : binds)
        if (b.key == key) { hit = &b; break; }
      if (!hit) throw FormatError("config: unknown key '" + key + "'");
      if (hit->opt->count() > 0) continue;
      hit->apply(value);
    }
  }

  void require(const CLI::Option* opt, const std::string& flag,
               const std::string& value) const {
    if (opt->count() == 0 && value.empty())
      throw UsageError(flag + " is required (flag or config)");
  }
};

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

SceneSpec::Background parse_background(const std::string& s) {
  if (s == "flat") return SceneSpec::Background::kFlat;
  if (s == "vgrad") return SceneSpec::Background::kVGradient;
  throw FormatError("background must be flat or vgrad, got '" + s + "'");
}

SamplerConfig::Order parse_order(const std::string& s) {
  if (s == "spiral") return SamplerConfig::Order::kSpiral;
  if (s == "random") return SamplerConfig::Order::kRandom;
  throw FormatError("order must be spiral or random, got '" + s + "'");
}

// Patch size implied by the image and the model's latent grid; must also match
// the codebook dimensionality.
int infer_patch(const Image& img, const ModelConfig& cfg, const Codebook& cb) {
  if (cfg.grid_h <= 0 || img.h % cfg.grid_h != 0)
    throw FormatError("image height incompatible with model grid");
  const int f = img.h / cfg.grid_h;
  if (img.w != f * cfg.grid_w)
    throw FormatError("image width incompatible with model grid");
  if (cb.dim() != f * f * img.c)
    throw FormatError("codebook dimension does not match image patches");
  return f;
}

struct LoadedModel {
  ModelConfig cfg;
  ModelParams params;
  Codebook cb;
};

LoadedModel load_model(const std::string& checkpoint, const std::string& codebook) {
  LoadedModel lm;
  auto [cfg, params] = load_checkpoint(checkpoint);
  lm.cfg = cfg;
  lm.params = std::move(params);
  lm.cb = load_codebook(codebook);
  if (lm.cb.n() != lm.cfg.vocab)
    throw FormatError("codebook size does not match model vocabulary");
  return lm;
}

// ---- gen-data --------------------------------------------------------------

void setup_gen_data(CLI::App& app) {
  auto* sub = app.add_subcommand("gen-data", "generate a synthetic scene corpus");
  auto fl = std::make_shared<FlagSet>(sub);
  auto out = std::make_shared<std::string>();
  auto count = std::make_shared<int>(1000);
  auto height = std::make_shared<int>(32);
  auto width = std::make_shared<int>(32);
  auto seed = std::make_shared<uint64_t>(0);
  auto background = std::make_shared<std::string>("flat");
  auto* out_opt = fl->add("--out", *out, "output directory");
  fl->add("--count", *count, "number of scenes");
  fl->add("--height", *height, "scene height");
  fl->add("--width", *width, "scene width");
  fl->add("--seed", *seed, "master seed");
  fl->add("--background", *background, "flat | vgrad");

  sub->callback([=]() {
    fl->load_config();
    fl->require(out_opt, "--out", *out);
    SceneSpec spec = SceneSpec::defaults();
    spec.h = *height;
    spec.w = *width;
    spec.background = parse_background(*background);
    const std::vector<Image> scenes = generate_scenes(spec, *count, *seed);
    fs::create_directories(*out);
    char name[32];
    for (size_t i = 0; i < scenes.size(); ++i) {
      std::snprintf(name, sizeof(name), "scene_%05zu.ppm", i);
      write_image(scenes[i], join(*out, name));
    }
    std::cout << "wrote " << scenes.size() << " scenes to " << *out << "\n";
  });
}

// ---- train-tokenizer -------------------------------------------------------

void setup_train_tokenizer(CLI::App& app) {
  auto* sub = app.add_subcommand("train-tokenizer", "learn a patch codebook");
  auto fl = std::make_shared<FlagSet>(sub);
  auto data = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();
  auto vocab = std::make_shared<int>(64);
  auto patch = std::make_shared<int>(4);
  auto iters = std::make_shared<int>(25);
  auto seed = std::make_shared<uint64_t>(0);
  auto* data_opt = fl->add("--data", *data, "image directory");
  auto* out_opt = fl->add("--out", *out, "codebook file");
  fl->add("--vocab", *vocab, "codebook size");
  fl->add("--patch", *patch, "patch side length");
  fl->add("--iters", *iters, "k-means iterations");
  fl->add("--seed", *seed, "master seed");

  sub->callback([=]() {
    fl->load_config();
    fl->require(data_opt, "--data", *data);
    fl->require(out_opt, "--out", *out);
    const std::vector<Image> images = load_image_dir(*data, 0, 0);
    const Codebook cb = learn_codebook(images, *vocab, *patch, *iters, *seed);
    save_codebook(cb, *out);
    std::cout << "codebook " << cb.n() << "x" << cb.dim() << " -> " << *out << "\n";
  });
}

// ---- train-model -----------------------------------------------------------

void setup_train_model(CLI::App& app) {
  auto* sub = app.add_subcommand("train-model", "train the masked token model");
  auto fl = std::make_shared<FlagSet>(sub);
  auto data = std::make_shared<std::string>();
  auto codebook = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();
  auto loss_log = std::make_shared<std::string>();
  auto patch = std::make_shared<int>(4);
  auto steps = std::make_shared<int>(2000);
  auto batch = std::make_shared<int>(16);
  auto lr = std::make_shared<float>(3e-4f);
  auto p_rand = std::make_shared<float>(0.9f);
  auto layers = std::make_shared<int>(4);
  auto width = std::make_shared<int>(64);
  auto heads = std::make_shared<int>(4);
  auto ff_mult = std::make_shared<int>(4);
  auto seed = std::make_shared<uint64_t>(0);
  auto* data_opt = fl->add("--data", *data, "image directory");
  auto* cb_opt = fl->add("--codebook", *codebook, "codebook file");
  auto* out_opt = fl->add("--out", *out, "checkpoint file");
  fl->add("--loss-log", *loss_log, "step,loss file (default <out>.loss)");
  fl->add("--patch", *patch, "patch side length");
  fl->add("--steps", *steps, "optimizer steps");
  fl->add("--batch", *batch, "batch size");
  fl->add("--lr", *lr, "Adam learning rate");
  fl->add("--p-rand", *p_rand, "perturbation replacement probability");
  fl->add("--layers", *layers, "transformer layers");
  fl->add("--width", *width, "embedding width");
  fl->add("--heads", *heads, "attention heads");
  fl->add("--ff-mult", *ff_mult, "feed-forward width multiplier");
  fl->add("--seed", *seed, "master seed");

  sub->callback([=]() {
    fl->load_config();
    fl->require(data_opt, "--data", *data);
    fl->require(cb_opt, "--codebook", *codebook);
    fl->require(out_opt, "--out", *out);
    if (*steps < 1) throw UsageError("--steps must be >= 1");
    if (*batch < 1) throw UsageError("--batch must be >= 1");

    std::vector<std::string> names;
    const std::vector<Image> images = load_image_dir(*data, 0, 0, &names);
    const Codebook cb = load_codebook(*codebook);
    const SequenceDataset ds = build_sequence_dataset(images, names, cb, *patch);

    ModelConfig cfg;
    cfg.vocab = cb.n();
    cfg.grid_h = ds.grid_h;
    cfg.grid_w = ds.grid_w;
    cfg.layers = *layers;
    cfg.width = *width;
    cfg.heads = *heads;
    cfg.ff_mult = *ff_mult;
    cfg.p_rand = *p_rand;
    cfg.seed = static_cast<uint32_t>(*seed);
    cfg.validate();

    Trainer tr;
    tr.cfg = cfg;
    tr.params = init_params(cfg);
    tr.lr = *lr;
    tr.threads = fl->threads;

    const std::string log_path = loss_log->empty() ? *out + ".loss" : *loss_log;
    std::ofstream log(log_path);
    if (!log) throw FormatError("cannot open " + log_path + " for writing");

    Rng rng(*seed, 0x7EA1);
    std::vector<std::vector<int>> seqs(static_cast<size_t>(*batch));
    for (int step = 1; step <= *steps; ++step) {
      for (auto& s : seqs) {
        const size_t pick = static_cast<size_t>(
            rng.uniform_u64(static_cast<uint64_t>(ds.grids.size())));
        s = ds.grids[pick].idx;
      }
      const float loss = tr.step(seqs, rng);
      log << step << "," << format_double(loss) << "\n";
      if (step % 100 == 0 || step == *steps)
        std::cout << "step " << step << " loss " << format_double(loss) << "\n";
    }
    if (!log) throw FormatError("write failed: " + log_path);
    log.close();
    save_checkpoint(tr.cfg, tr.params, *out);
    std::cout << "checkpoint -> " << *out << "\n";
  });
}

// ---- denoise ---------------------------------------------------------------

void setup_denoise(CLI::App& app) {
  auto* sub = app.add_subcommand("denoise", "resample suspicious tokens");
  auto fl = std::make_shared<FlagSet>(sub);
  auto image = std::make_shared<std::string>();
  auto codebook = std::make_shared<std::string>();
  auto checkpoint = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();
  auto heatmap = std::make_shared<std::string>();
  auto steps = std::make_shared<int>(20);
  auto top_k = std::make_shared<int>(100);
  auto seed = std::make_shared<uint64_t>(0);
  auto* image_opt = fl->add("--image", *image, "input image");
  auto* cb_opt = fl->add("--codebook", *codebook, "codebook file");
  auto* ck_opt = fl->add("--checkpoint", *checkpoint, "model checkpoint");
  auto* out_opt = fl->add("--out", *out, "output image");
  fl->add("--heatmap", *heatmap,
          "token-likelihood image (default <out>.heatmap.pgm)");
  fl->add("--steps", *steps, "resampling rounds");
  fl->add("--top-k", *top_k, "multinomial truncation");
  fl->add("--seed", *seed, "master seed");

  sub->callback([=]() {
    fl->load_config();
    fl->require(image_opt, "--image", *image);
    fl->require(cb_opt, "--codebook", *codebook);
    fl->require(ck_opt, "--checkpoint", *checkpoint);
    fl->require(out_opt, "--out", *out);

    const LoadedModel lm = load_model(*checkpoint, *codebook);
    const Image img = read_image(*image);
    const int f = infer_patch(img, lm.cfg, lm.cb);
    const TokenGrid s = encode_image(img, lm.cb, f);

    const Eigen::VectorXf q = token_likelihood_heatmap(lm.cfg, lm.params, s.idx);
    Image heat(lm.cfg.grid_h, lm.cfg.grid_w, 1);
    for (int i = 0; i < lm.cfg.seq_len(); ++i)
      heat.data[static_cast<size_t>(i)] = 1.0f - q(i);
    const std::string heat_path =
        heatmap->empty() ? *out + ".heatmap.pgm" : *heatmap;
    write_image(heat, heat_path);

    const TokenGrid cleaned =
        denoise(lm.cfg, lm.params, s, *steps, *top_k, *seed);
    write_image(decode(cleaned, lm.cb, f, img.c), *out);
    std::cout << "denoised -> " << *out << " (heatmap " << heat_path << ")\n";
  });
}

// ---- inpaint ---------------------------------------------------------------

void add_sampler_flags(FlagSet& fl, std::shared_ptr<int> epochs,
                       std::shared_ptr<int> collages, std::shared_ptr<int> top_k,
                       std::shared_ptr<int> dilation, std::shared_ptr<float> sigma,
                       std::shared_ptr<std::string> order,
                       std::shared_ptr<uint64_t> seed) {
  fl.add("--epochs", *epochs, "passes over the edit region");
  fl.add("--collages", *collages, "collages per epoch");
  fl.add("--top-k", *top_k, "multinomial truncation");
  fl.add("--dilation", *dilation, "latent mask dilation radius");
  fl.add("--sigma", *sigma, "soft collage blur width");
  fl.add("--order", *order, "spiral | random");
  fl.add("--seed", *seed, "master seed");
}

SamplerConfig make_sampler_config(int epochs, int collages, int top_k,
                                  int dilation, float sigma,
                                  const std::string& order, uint64_t seed,
                                  bool randomize) {
  SamplerConfig sc;
  sc.epochs = epochs;
  sc.collages_per_epoch = collages;
  sc.top_k = top_k;
  sc.dilation = dilation;
  sc.sigma = sigma;
  sc.order = parse_order(order);
  sc.randomize_init = randomize;
  sc.re_randomize_second_epoch = randomize;
  sc.seed = seed;
  sc.validate();
  return sc;
}

void setup_inpaint(CLI::App& app) {
  auto* sub = app.add_subcommand("inpaint", "fill a masked region");
  auto fl = std::make_shared<FlagSet>(sub);
  auto image = std::make_shared<std::string>();
  auto mask = std::make_shared<std::string>();
  auto codebook = std::make_shared<std::string>();
  auto checkpoint = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();
  auto epochs = std::make_shared<int>(2);
  auto collages = std::make_shared<int>(4);
  auto top_k = std::make_shared<int>(100);
  auto dilation = std::make_shared<int>(1);
  auto sigma = std::make_shared<float>(0.0f);
  auto order = std::make_shared<std::string>("spiral");
  auto seed = std::make_shared<uint64_t>(0);
  auto* image_opt = fl->add("--image", *image, "source image");
  auto* mask_opt = fl->add("--mask", *mask, "mask (255 preserved, 0 edit)");
  auto* cb_opt = fl->add("--codebook", *codebook, "codebook file");
  auto* ck_opt = fl->add("--checkpoint", *checkpoint, "model checkpoint");
  auto* out_opt = fl->add("--out", *out, "output image");
  add_sampler_flags(*fl, epochs, collages, top_k, dilation, sigma, order, seed);

  sub->callback([=]() {
    fl->load_config();
    fl->require(image_opt, "--image", *image);
    fl->require(mask_opt, "--mask", *mask);
    fl->require(cb_opt, "--codebook", *codebook);
    fl->require(ck_opt, "--checkpoint", *checkpoint);
    fl->require(out_opt, "--out", *out);

    const LoadedModel lm = load_model(*checkpoint, *codebook);
    const Image img = read_image(*image);
    const int f = infer_patch(img, lm.cfg, lm.cb);
    const PixelMask m = read_mask(*mask);
    const SamplerConfig sc = make_sampler_config(
        *epochs, *collages, *top_k, *dilation, *sigma, *order, *seed, true);
    write_image(inpaint(lm.cfg, lm.params, lm.cb, f, img, m, sc), *out);
    std::cout << "inpainted -> " << *out << "\n";
  });
}

// ---- composite -------------------------------------------------------------

void setup_composite(CLI::App& app) {
  auto* sub = app.add_subcommand(
      "composite", "harmonize a source/target collage or an edited image");
  auto fl = std::make_shared<FlagSet>(sub);
  auto source = std::make_shared<std::string>();
  auto target = std::make_shared<std::string>();
  auto edited = std::make_shared<std::string>();
  auto mask = std::make_shared<std::string>();
  auto codebook = std::make_shared<std::string>();
  auto checkpoint = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();
  auto epochs = std::make_shared<int>(2);
  auto collages = std::make_shared<int>(4);
  auto top_k = std::make_shared<int>(100);
  auto dilation = std::make_shared<int>(1);
  auto sigma = std::make_shared<float>(0.0f);
  auto order = std::make_shared<std::string>("spiral");
  auto seed = std::make_shared<uint64_t>(0);
  fl->add("--source", *source, "image providing the preserved region");
  fl->add("--target", *target, "image providing the edit region");
  fl->add("--edited", *edited, "pre-assembled collage image");
  auto* mask_opt = fl->add("--mask", *mask, "mask (255 source, 0 target)");
  auto* cb_opt = fl->add("--codebook", *codebook, "codebook file");
  auto* ck_opt = fl->add("--checkpoint", *checkpoint, "model checkpoint");
  auto* out_opt = fl->add("--out", *out, "output image");
  add_sampler_flags(*fl, epochs, collages, top_k, dilation, sigma, order, seed);

  sub->callback([=]() {
    fl->load_config();
    fl->require(mask_opt, "--mask", *mask);
    fl->require(cb_opt, "--codebook", *codebook);
    fl->require(ck_opt, "--checkpoint", *checkpoint);
    fl->require(out_opt, "--out", *out);
    const bool pair = !source->empty() && !target->empty();
    if (pair == !edited->empty())
      throw UsageError("give either --edited or both --source and --target");

    const LoadedModel lm = load_model(*checkpoint, *codebook);
    const PixelMask m = read_mask(*mask);
    Image i_e;
    if (pair) {
      const Image i_s = read_image(*source);
      const Image i_t = read_image(*target);
      if (i_s.h != i_t.h || i_s.w != i_t.w || i_s.c != i_t.c)
        throw FormatError("source and target shapes differ");
      if (i_s.h != m.h || i_s.w != m.w)
        throw FormatError("mask shape does not match the images");
      i_e = i_s;
      for (int y = 0; y < i_e.h; ++y)
        for (int x = 0; x < i_e.w; ++x)
          if (!m.at(y, x))
            for (int ch = 0; ch < i_e.c; ++ch)
              i_e.at(y, x, ch) = i_t.at(y, x, ch);
    } else {
      i_e = read_image(*edited);
    }
    const int f = infer_patch(i_e, lm.cfg, lm.cb);
    const SamplerConfig sc = make_sampler_config(
        *epochs, *collages, *top_k, *dilation, *sigma, *order, *seed, false);
    write_image(composite(lm.cfg, lm.params, lm.cb, f, i_e, m, sc), *out);
    std::cout << "composited -> " << *out << "\n";
  });
}

// ---- evaluate --------------------------------------------------------------

void setup_evaluate(CLI::App& app) {
  auto* sub = app.add_subcommand("evaluate", "set-level and paired metrics");
  auto fl = std::make_shared<FlagSet>(sub);
  auto real_dir = std::make_shared<std::string>();
  auto fake_dir = std::make_shared<std::string>();
  auto sources = std::make_shared<std::string>();
  auto masks = std::make_shared<std::string>();
  auto feature_mode = std::make_shared<std::string>("latent");
  auto k = std::make_shared<int>(3);
  auto codebook = std::make_shared<std::string>();
  auto patch = std::make_shared<int>(4);
  auto out = std::make_shared<std::string>();
  auto* real_opt = fl->add("--real-dir", *real_dir, "reference images");
  auto* fake_opt = fl->add("--fake-dir", *fake_dir, "generated images");
  fl->add("--sources", *sources, "paired source images for masked L1");
  fl->add("--masks", *masks, "paired masks for masked L1");
  fl->add("--feature-mode", *feature_mode, "latent | randproj");
  fl->add("--k", *k, "neighbourhood size for density/coverage");
  fl->add("--codebook", *codebook, "codebook file (latent mode)");
  fl->add("--patch", *patch, "patch side length (latent mode)");
  auto* out_opt = fl->add("--out", *out, "report file");

  sub->callback([=]() {
    fl->load_config();
    fl->require(real_opt, "--real-dir", *real_dir);
    fl->require(fake_opt, "--fake-dir", *fake_dir);
    fl->require(out_opt, "--out", *out);

    const std::vector<Image> real = load_image_dir(*real_dir, 0, 0);
    const std::vector<Image> fake = load_image_dir(*fake_dir, 0, 0);
    if (real.empty() || fake.empty())
      throw FormatError("evaluate: empty image directory");

    FeatureSet fr, ff;
    if (*feature_mode == "latent") {
      if (codebook->empty())
        throw UsageError("--codebook is required for latent features");
      const Codebook cb = load_codebook(*codebook);
      fr = extract_features_latent(real, cb, *patch, "real");
      ff = extract_features_latent(fake, cb, *patch, "generated");
    } else if (*feature_mode == "randproj") {
      if (real[0].h != fake[0].h || real[0].w != fake[0].w ||
          real[0].c != fake[0].c)
        throw FormatError("randproj features need equal image shapes");
      fr = extract_features_randproj(real, "real");
      ff = extract_features_randproj(fake, "generated");
    } else {
      throw FormatError("feature-mode must be latent or randproj, got '" +
                        *feature_mode + "'");
    }

    MetricReport report;
    report.feature_mode = *feature_mode;
    report.n_real = static_cast<int>(real.size());
    report.n_fake = static_cast<int>(fake.size());
    report.k = *k;
    report.frechet = frechet_distance(fr, ff);
    report.density = density(fr, ff, *k);
    report.coverage = coverage(fr, ff, *k);

    if (!sources->empty() || !masks->empty()) {
      if (sources->empty() || masks->empty())
        throw UsageError("--sources and --masks must be given together");
      const std::vector<Image> src = load_image_dir(*sources, 0, 0);
      const std::vector<Image> msk = load_image_dir(*masks, 0, 0);
      if (src.size() != fake.size() || msk.size() != fake.size())
        throw FormatError("masked L1 needs one source and one mask per fake image");
      double sum = 0.0;
      for (size_t i = 0; i < fake.size(); ++i)
        sum += masked_l1(fake[i], src[i], mask_from_image(msk[i]));
      report.masked_l1 = sum / static_cast<double>(fake.size());
    }

    const KvPairs kv = metric_report_kv(report);
    write_kv(*out, kv);
    for (const auto& [key, value] : kv) std::cout << key << " = " << value << "\n";
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"token-resampling image editor"};
  app.require_subcommand(1);
  setup_gen_data(app);
  setup_train_tokenizer(app);
  setup_train_model(app);
  setup_denoise(app);
  setup_inpaint(app);
  setup_composite(app);
  setup_evaluate(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
