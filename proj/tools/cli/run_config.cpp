#include "run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "arae/errors.hpp"

namespace arae::cli {

namespace {

[[noreturn]] void bad(std::string_view key, const std::string& why) {
  throw ConfigError(std::string(key) + ": " + why);
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_number(std::string_view key, std::string_view v) {
  T out{};
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) bad(key, "expected a number, got '" + std::string(v) + "'");
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  bad(key, "expected true or false, got '" + std::string(v) + "'");
}

std::vector<std::size_t> parse_list(std::string_view key, std::string_view v) {
  std::vector<std::size_t> out;
  if (v.empty() || v == "none") return out;
  std::size_t start = 0;
  while (start <= v.size()) {
    const auto comma = v.find(',', start);
    const auto item = trim(v.substr(start, comma == std::string_view::npos ? v.npos : comma - start));
    out.push_back(parse_number<std::size_t>(key, item));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string show(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

template <class T>
std::string show_int(T v) {
  return std::to_string(v);
}

std::string show(const std::vector<std::size_t>& v) {
  if (v.empty()) return "none";
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define ARAE_DOUBLE(name, member)                                                                     \
  Field{name, [](RunConfig& c, std::string_view v) { c.member = parse_number<double>(name, v); }, \
        [](const RunConfig& c) { return show(c.member); }}
#define ARAE_SIZE(name, member)                                                                            \
  Field{name, [](RunConfig& c, std::string_view v) { c.member = parse_number<std::size_t>(name, v); }, \
        [](const RunConfig& c) { return show_int(c.member); }}
#define ARAE_LIST(name, member)                                                              \
  Field{name, [](RunConfig& c, std::string_view v) { c.member = parse_list(name, v); }, \
        [](const RunConfig& c) { return show(c.member); }}

const std::vector<Field>& fields() {
  static const std::vector<Field> f{
      Field{"mode",
            [](RunConfig& c, std::string_view v) {
              if (v != "text" && v != "image") bad("mode", "expected text or image, got '" + std::string(v) + "'");
              c.mode = std::string(v);
            },
            [](const RunConfig& c) { return c.mode; }},
      Field{"data", [](RunConfig& c, std::string_view v) { c.data = std::string(v); },
            [](const RunConfig& c) { return c.data; }},
      Field{"out", [](RunConfig& c, std::string_view v) { c.out = std::string(v); },
            [](const RunConfig& c) { return c.out; }},
      Field{"seed", [](RunConfig& c, std::string_view v) { c.train.seed = parse_number<std::uint64_t>("seed", v); },
            [](const RunConfig& c) { return show_int(c.train.seed); }},
      Field{"data_seed", [](RunConfig& c, std::string_view v) { c.data_seed = parse_number<std::uint64_t>("data_seed", v); },
            [](const RunConfig& c) { return show_int(c.data_seed); }},
      ARAE_SIZE("synth_size", synth_size),
      ARAE_SIZE("image_side", image_side),
      ARAE_SIZE("max_len", max_len),
      ARAE_SIZE("min_count", min_count),
      ARAE_SIZE("epochs", train.epochs),
      ARAE_SIZE("batch_size", train.batch_size),
      ARAE_DOUBLE("lambda1", train.lambda1),
      ARAE_DOUBLE("lambda2", train.lambda2),
      ARAE_DOUBLE("clip_eps", train.clip_eps),
      ARAE_SIZE("critic_iters", train.critic_iters),
      ARAE_SIZE("gan_loops", train.gan_loops),
      ARAE_LIST("gan_loop_epochs", train.gan_loop_epochs),
      Field{"ae_optimizer",
            [](RunConfig& c, std::string_view v) {
              if (v == "sgd") {
                c.train.ae_optimizer = AeOptimizer::Sgd;
              } else if (v == "adam") {
                c.train.ae_optimizer = AeOptimizer::Adam;
              } else {
                bad("ae_optimizer", "expected sgd or adam, got '" + std::string(v) + "'");
              }
            },
            [](const RunConfig& c) { return std::string(c.train.ae_optimizer == AeOptimizer::Sgd ? "sgd" : "adam"); }},
      ARAE_DOUBLE("lr_ae", train.lr_ae),
      ARAE_DOUBLE("lr_gen", train.lr_gen),
      ARAE_DOUBLE("lr_critic", train.lr_critic),
      ARAE_DOUBLE("lr_classifier", train.lr_classifier),
      ARAE_DOUBLE("noise_sigma", train.noise_sigma),
      ARAE_DOUBLE("noise_decay", train.noise_decay),
      ARAE_SIZE("noise_interval", train.noise_interval),
      ARAE_DOUBLE("grad_clip", train.grad_clip),
      Field{"transfer", [](RunConfig& c, std::string_view v) { c.train.transfer = parse_bool("transfer", v); },
            [](const RunConfig& c) { return std::string(c.train.transfer ? "true" : "false"); }},
      ARAE_SIZE("log_interval", train.log_interval),
      ARAE_SIZE("embed_dim", embed_dim),
      ARAE_SIZE("hidden", hidden),
      ARAE_SIZE("z_dim", z_dim),
      ARAE_LIST("generator_hidden", generator_hidden),
      ARAE_LIST("critic_hidden", critic_hidden),
      ARAE_LIST("classifier_hidden", classifier_hidden),
      ARAE_LIST("image_encoder_hidden", image_encoder_hidden),
      ARAE_LIST("image_decoder_hidden", image_decoder_hidden),
      ARAE_SIZE("image_code", image_code),
  };
  return f;
}

#undef ARAE_DOUBLE
#undef ARAE_SIZE
#undef ARAE_LIST

}  // namespace

void RunConfig::set(std::string_view key, std::string_view value) {
  for (const auto& f : fields()) {
    if (f.key == key) {
      f.set(*this, trim(value));
      return;
    }
  }
  bad(key, "unknown key");
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read " + path.string());
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const auto text = trim(line);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config: line " + std::to_string(number) + " of " + path.string() + " is not key = value");
    }
    set(trim(std::string_view(text).substr(0, eq)), trim(std::string_view(text).substr(eq + 1)));
  }
}

void RunConfig::validate() const {
  train.validate();
  if (data.empty()) bad("data", "empty path");
  if (data != "synth" && !std::filesystem::exists(data)) bad("data", "no such file or directory: " + data);
  if (out.empty()) bad("out", "empty path");
  if (synth_size == 0) bad("synth_size", "must be positive");
  if (max_len == 0) bad("max_len", "must be positive");
  if (mode == "image" && image_side == 0) bad("image_side", "must be positive");
  if (mode == "image" && train.transfer) bad("transfer", "only text models support attribute transfer");
  if (embed_dim == 0 || hidden == 0 || z_dim == 0 || image_code == 0) bad("hidden", "layer sizes must be positive");
}

std::string RunConfig::to_text() const {
  std::string s;
  for (const auto& f : fields()) s += f.key + " = " + f.get(*this) + "\n";
  return s;
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> out;
    for (const auto& f : fields()) out.push_back(f.key);
    return out;
  }();
  return k;
}

ArchSpec RunConfig::arch(std::size_t vocab_size, std::size_t pixels) const {
  ArchSpec a;
  a.modality = modality();
  a.z_dim = z_dim;
  a.generator_hidden = generator_hidden;
  a.critic_hidden = critic_hidden;
  a.classifier_hidden = classifier_hidden;
  if (a.modality == Modality::Text) {
    a.vocab_size = vocab_size;
    a.embed_dim = embed_dim;
    a.hidden = hidden;
    a.decoder_heads = train.transfer ? 2 : 1;
    a.num_classes = train.transfer ? 2 : 0;
  } else {
    a.pixels = pixels;
    a.image_encoder_hidden = image_encoder_hidden;
    a.image_decoder_hidden = image_decoder_hidden;
    a.image_code = image_code;
  }
  a.validate();
  return a;
}

RunConfig preset(std::string_view name) {
  RunConfig c;
  if (name == "text-desk") {
    c.train.batch_size = 32;
    c.train.lr_gen = 5e-4;
    c.train.lr_critic = 1e-3;
    c.train.clip_eps = 0.05;
  } else if (name == "text-paper") {
    c.train = text_paper_config();
    c.embed_dim = 300;
    c.hidden = 300;
    c.z_dim = 100;
    c.generator_hidden = {300};
    c.critic_hidden = {300};
    c.classifier_hidden = {200, 100};
    c.max_len = 30;
  } else if (name == "image-desk") {
    c.mode = "image";
    c.train = image_paper_config();
    c.train.epochs = 5;
    c.train.gan_loop_epochs.clear();
    c.synth_size = 5000;
    c.image_side = 14;
    c.image_encoder_hidden = {128, 64};
    c.image_decoder_hidden = {64, 128};
    c.image_code = 32;
    c.z_dim = 16;
    c.generator_hidden = {32, 64};
    c.critic_hidden = {32, 16};
  } else if (name == "image-paper") {
    c.mode = "image";
    c.train = image_paper_config();
    c.train.gan_loop_epochs.clear();
    c.image_side = 28;
    c.z_dim = 32;
    c.generator_hidden = {64, 100, 150};
    c.critic_hidden = {100, 60, 20};
  } else {
    throw ConfigError("preset: unknown preset '" + std::string(name) +
                      "' (text-desk, image-desk, text-paper, image-paper)");
  }
  return c;
}

}  // namespace arae::cli
