#include "genonet/intent.hpp"
#include "genonet/llm.hpp"

#include <set>

namespace genonet::llm {

namespace {

std::optional<std::string> check_route_output(const std::string& text)
{
    static const std::set<std::string> routes = {"GeneralQuery", "GenerateCpp", "GeneratePython", "Execute", "Interpret", "Debug"};
    auto obj = extract_json_object(text);
    if (!obj) return "expected a JSON object";
    auto it = obj->find("route");
    if (it == obj->end() || !it->is_string()) return "missing string field 'route'";
    if (!routes.count(it->get<std::string>())) return "unknown route '" + it->get<std::string>() + "'";
    auto conf = obj->find("confidence");
    if (conf != obj->end()) {
        if (!conf->is_number()) return "'confidence' must be a number";
        double c = conf->get<double>();
        if (c < 0.0 || c > 1.0) return "'confidence' must lie in [0, 1]";
    }
    return std::nullopt;
}

} // namespace

SchemaRegistry SchemaRegistry::with_builtins()
{
    SchemaRegistry r;
    r.add(genonet::kScenarioSpecContract, genonet::check_scenario_spec_output);
    r.add("route-v1", check_route_output);
    return r;
}

} // namespace genonet::llm
