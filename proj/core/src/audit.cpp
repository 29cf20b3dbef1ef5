#include "c4g/audit.hpp"

#include <json.hpp>

namespace c4g {

std::string AuditReport::to_json() const {
  nlohmann::json j;
  j["strict_mode"] = strict_mode;
  j["passed"] = passed();
  j["components"] = nlohmann::json::array();
  for (const auto& e : entries) {
    nlohmann::json item;
    item["component"] = e.component;
    item["residuals"] = e.residual;
    item["max_residual"] = e.max_residual();
    item["asserted"] = e.asserted;
    if (e.asserted) {
      item["threshold"] = e.threshold;
      item["pass"] = e.pass();
    }
    j["components"].push_back(item);
  }
  return j.dump(2);
}

}  // namespace c4g
