#pragma once

// A scene bundles one field (SODE, connection or Finsler basic function)
// with its chart and integration options, and its line-oriented text form:
//
//   [scene]
//   dim = 2
//   kind = sode
//   chart = box(-5, 5; 0.01, 10)
//   [sode]
//   S1 = "2*y1*y2/x2"
//   S2 = "(y2^2 - y1^2)/x2"
//   [options]
//   atol = 1e-12

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "sode/connection.hpp"
#include "sode/core.hpp"
#include "sode/finsler.hpp"
#include "sode/flow.hpp"

namespace sode {

enum class SceneKind { Sode, Connection, Finsler };
std::string to_string(SceneKind k);

struct SceneOptions {
  double atol = 1e-10;
  double rtol = 1e-8;
  double blowup = 1e8;
  double max_step = std::numeric_limits<double>::infinity();
  std::uint64_t seed = 1;
  std::optional<double> degree;  // declared homogeneity degree of the spray
};

/// Scene file errors; the message starts with "<origin>:<line>:" when a
/// line is known.
class SceneError : public ValidationError {
 public:
  SceneError(const std::string& what, std::size_t line) : ValidationError(what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class Scene {
 public:
  std::string name;
  std::size_t dim = 0;
  SceneKind kind = SceneKind::Sode;
  DomainKind domain = DomainKind::WholeBundle;
  std::optional<Box> chart;
  SceneOptions options;
  std::string digest;  // FNV-1a of the source text, 16 hex digits

  std::optional<SodeField> sode;
  std::optional<ConnectionField> connection;
  std::optional<FinslerStructure> finsler;

  /// The SODE of the scene: the field itself, the induced spray of the
  /// connection, or the Finsler semispray.
  SodeField spray() const;
  FlowOptions flow_options() const;
};

Scene parse_scene(std::string_view text, std::string_view origin = "<scene>");
Scene load_scene(const std::filesystem::path& path);

}  // namespace sode
