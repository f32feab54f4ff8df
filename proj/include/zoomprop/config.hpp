#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "zoomprop/eval.hpp"
#include "zoomprop/pipeline.hpp"
#include "zoomprop/scnet.hpp"
#include "zoomprop/synth.hpp"

namespace zoomprop {

// Flat key/value run configuration. Every key has a default; unknown keys are
// rejected. Values come from defaults, then a config file, then flags.
class RunConfig {
 public:
  struct KeyInfo {
    std::string default_value;
    std::string help;
  };

  RunConfig();

  static const std::map<std::string, KeyInfo>& keys();

  // "key = value" lines; '#' starts a comment.
  void load_file(const std::filesystem::path& path);
  void set(const std::string& key, const std::string& value);

  const std::string& get(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<std::string> get_list(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;

  // Sorted "key = value" lines, loadable by load_file.
  std::string dump() const;

  SynthConfig synth() const;
  ScNetConfig scnet(int channels) const;
  RoiSamplingConfig roi_sampling() const;
  PipelineConfig pipeline() const;
  Matching matching() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace zoomprop
