#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mmh {

enum class Modality { Text2Text, Pose2Text, Features2Text, Video2Text, Image2Text, Mixed2Text };

std::string_view modality_name(Modality m);
/// Throws UnknownModality with the list of registered names.
Modality parse_modality(std::string_view name);
std::vector<std::string> registered_modalities();

enum class SignalKind { Pose, Features, Video };

std::string_view signal_kind_name(SignalKind k);
std::optional<SignalKind> signal_kind_of(Modality m);

/// Maps file extensions (lower-case, with leading dot) to signal kinds.
class ExtensionRegistry {
 public:
  /// `.mmhpose`, `.pose`, `.json` -> pose; `.mmhfeat` -> features; `.mmhvid` -> video.
  static ExtensionRegistry defaults();

  void add(std::string extension, SignalKind kind);
  std::optional<SignalKind> lookup_path(std::string_view path) const;
  const std::map<std::string, SignalKind>& entries() const { return map_; }

 private:
  std::map<std::string, SignalKind> map_;
};

}  // namespace mmh
