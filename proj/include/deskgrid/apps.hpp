#pragma once

#include <array>
#include <optional>
#include <string_view>

namespace deskgrid {

enum class App { kSheet, kFiles, kEditor };
enum class Domain { kOS, kOffice, kDaily, kProfessional, kWorkflow };

inline constexpr std::array<App, 3> kAllApps = {App::kSheet, App::kFiles, App::kEditor};
inline constexpr std::array<Domain, 5> kAllDomains = {Domain::kOS, Domain::kOffice, Domain::kDaily,
                                                      Domain::kProfessional, Domain::kWorkflow};

constexpr std::string_view app_name(App app) {
  switch (app) {
    case App::kSheet: return "sheet";
    case App::kFiles: return "files";
    case App::kEditor: return "editor";
  }
  return "?";
}

constexpr std::string_view domain_name(Domain d) {
  switch (d) {
    case Domain::kOS: return "OS";
    case Domain::kOffice: return "Office";
    case Domain::kDaily: return "Daily";
    case Domain::kProfessional: return "Professional";
    case Domain::kWorkflow: return "Workflow";
  }
  return "?";
}

inline std::optional<App> parse_app(std::string_view s) {
  for (App a : kAllApps)
    if (app_name(a) == s) return a;
  return std::nullopt;
}

inline std::optional<Domain> parse_domain(std::string_view s) {
  for (Domain d : kAllDomains)
    if (domain_name(d) == s) return d;
  return std::nullopt;
}

}  // namespace deskgrid
