#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "deskgrid/apps.hpp"

namespace deskgrid {

enum class SemType { kCell, kRange, kText, kTextList, kPath, kInt };

std::string_view sem_type_name(SemType t);
std::optional<SemType> parse_sem_type(std::string_view s);

struct ApiParam {
  std::string name;
  SemType type = SemType::kText;
  bool required = true;
  friend bool operator==(const ApiParam&, const ApiParam&) = default;
};

struct ApiSpec {
  std::string name;  // app.verb
  std::vector<ApiParam> params;
  std::string doc;

  std::string app() const { return name.substr(0, name.find('.')); }
  friend bool operator==(const ApiSpec&, const ApiSpec&) = default;
};

/// A slot of a built-in environment operation. Generated artifacts bind API
/// parameter names onto these slots.
struct OpSlot {
  std::string name;
  SemType type;
};

struct OpDef {
  std::string id;  // e.g. "sheet.sum"
  App app;
  std::vector<OpSlot> slots;
};

/// Operations the simulated desktop can interpret. Generated API artifacts are
/// declarative descriptors over these, never free-form code.
const std::vector<OpDef>& op_library();
const OpDef* find_op(std::string_view id);

/// The "code artifact" produced by API implementation: which op an API name
/// dispatches to and how its parameters map onto the op's slots.
struct ApiArtifact {
  std::string api_name;
  std::string op;
  std::vector<std::pair<std::string, std::string>> bindings;  // api param -> op slot
  bool error_handling = true;
  bool logging = true;
  int revision = 1;

  std::string to_string() const;
  friend bool operator==(const ApiArtifact&, const ApiArtifact&) = default;
};

enum class ApiStatus { kDeclared = 0, kImplemented = 1, kTested = 2 };
std::string_view api_status_name(ApiStatus s);

/// Specs, their artifacts, and a per-spec status that only moves forward.
/// Not internally synchronized; callers serialize mutation.
class ApiRegistry {
 public:
  bool contains(std::string_view name) const { return entries_.count(std::string(name)) > 0; }
  void declare(ApiSpec spec);
  void set_artifact(ApiArtifact artifact);  // declared -> implemented
  void mark_tested(std::string_view name);  // implemented -> tested
  // Replacing an artifact during repair keeps the status; it never regresses.
  void replace_artifact(ApiArtifact artifact);

  ApiStatus status(std::string_view name) const;
  const ApiSpec& spec(std::string_view name) const;
  const ApiArtifact* artifact(std::string_view name) const;

  std::vector<std::string> names() const;
  std::vector<std::string> tested_names() const;
  std::size_t size() const { return entries_.size(); }

  std::string serialize() const;
  static ApiRegistry parse(std::string_view text);

 private:
  struct Entry {
    ApiSpec spec;
    std::optional<ApiArtifact> artifact;
    ApiStatus status = ApiStatus::kDeclared;
  };
  std::map<std::string, Entry> entries_;
};

/// The registry shipped with the environment: every op exposed under its
/// published API name, all in `tested` status. apigen reproduces it from the
/// shipped exemplar tasks.
const ApiRegistry& default_registry();

/// Spec + artifact pair for one published API name (used by the stub backend).
struct ApiTemplate {
  ApiSpec spec;
  std::string op;
};
const std::vector<ApiTemplate>& published_api_templates();

}  // namespace deskgrid
