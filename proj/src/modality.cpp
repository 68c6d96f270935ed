#include "mmh/modality.hpp"

#include <algorithm>
#include <filesystem>

#include "mmh/error.hpp"
#include "mmh/text.hpp"

namespace mmh {

namespace {
constexpr Modality kAll[] = {Modality::Text2Text,  Modality::Pose2Text,  Modality::Features2Text,
                             Modality::Video2Text, Modality::Image2Text, Modality::Mixed2Text};
}

std::string_view modality_name(Modality m) {
  switch (m) {
    case Modality::Text2Text: return "text2text";
    case Modality::Pose2Text: return "pose2text";
    case Modality::Features2Text: return "features2text";
    case Modality::Video2Text: return "video2text";
    case Modality::Image2Text: return "image2text";
    case Modality::Mixed2Text: return "mixed2text";
  }
  return "text2text";
}

std::vector<std::string> registered_modalities() {
  std::vector<std::string> out;
  for (auto m : kAll) out.emplace_back(modality_name(m));
  return out;
}

Modality parse_modality(std::string_view name) {
  for (auto m : kAll) {
    if (modality_name(m) == name) return m;
  }
  throw Error(ErrorCode::UnknownModality,
              "'" + std::string(name) + "'; registered: " + text::join(registered_modalities(), ", "));
}

std::string_view signal_kind_name(SignalKind k) {
  switch (k) {
    case SignalKind::Pose: return "pose";
    case SignalKind::Features: return "features";
    case SignalKind::Video: return "video";
  }
  return "pose";
}

std::optional<SignalKind> signal_kind_of(Modality m) {
  switch (m) {
    case Modality::Pose2Text: return SignalKind::Pose;
    case Modality::Features2Text: return SignalKind::Features;
    case Modality::Video2Text: return SignalKind::Video;
    default: return std::nullopt;
  }
}

ExtensionRegistry ExtensionRegistry::defaults() {
  ExtensionRegistry r;
  r.add(".mmhpose", SignalKind::Pose);
  r.add(".pose", SignalKind::Pose);
  r.add(".json", SignalKind::Pose);
  r.add(".mmhfeat", SignalKind::Features);
  r.add(".mmhvid", SignalKind::Video);
  return r;
}

void ExtensionRegistry::add(std::string extension, SignalKind kind) {
  std::transform(extension.begin(), extension.end(), extension.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (!extension.starts_with('.')) extension.insert(extension.begin(), '.');
  map_[std::move(extension)] = kind;
}

std::optional<SignalKind> ExtensionRegistry::lookup_path(std::string_view path) const {
  std::string ext = std::filesystem::path(std::string(path)).extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  auto it = map_.find(ext);
  if (it == map_.end()) return std::nullopt;
  return it->second;
}

}  // namespace mmh
