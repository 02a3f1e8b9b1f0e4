#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "arae/model.hpp"
#include "arae/training.hpp"

namespace arae::cli {

/// Everything a run needs: training hyperparameters, architecture sizes and
/// data/output locations. Files use flat `key = value` lines; `#` starts a
/// comment.
struct RunConfig {
  TrainConfig train;

  std::string mode = "text";  // text | image
  std::string data = "synth";
  std::string out = "runs/default";
  std::uint64_t data_seed = 7;
  std::size_t synth_size = 10000;
  std::size_t image_side = 14;
  std::size_t max_len = 15;
  std::size_t min_count = 1;

  std::size_t embed_dim = 32;
  std::size_t hidden = 64;
  std::size_t z_dim = 32;
  std::vector<std::size_t> generator_hidden{64, 64};
  std::vector<std::size_t> critic_hidden{64, 64};
  std::vector<std::size_t> classifier_hidden{64};
  std::vector<std::size_t> image_encoder_hidden{800, 400};
  std::vector<std::size_t> image_decoder_hidden{400, 800, 1000};
  std::size_t image_code = 100;

  /// Throws ConfigError("<key>: <reason>") for unknown keys or bad values.
  void set(std::string_view key, std::string_view value);
  void load_file(const std::filesystem::path& path);
  /// Checks ranges and that `data` exists (unless it is "synth").
  void validate() const;
  /// Every key in documented order, one `key = value` per line.
  std::string to_text() const;
  static const std::vector<std::string>& keys();

  Modality modality() const { return mode == "image" ? Modality::Image : Modality::Text; }
  /// Architecture for a text model over `vocab_size` tokens or an image model
  /// over `pixels` inputs.
  ArchSpec arch(std::size_t vocab_size, std::size_t pixels) const;
};

/// text-desk, image-desk, text-paper or image-paper. Throws ConfigError otherwise.
RunConfig preset(std::string_view name);

}  // namespace arae::cli
