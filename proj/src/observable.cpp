#include "hypofk/observable.hpp"

#include "hypofk/fields.hpp"

namespace hypofk {

void validate_observable(const ObservableSpec& obs, int n) {
    if (depends_on_time(obs.g)) throw ConfigError("g must not depend on t");
    auto check = [n](const Expr& e, const char* what) {
        if (max_var_index(e) > n)
            throw ConfigError(std::string(what) + " references a variable beyond x" + std::to_string(n));
    };
    check(obs.g, "g");
    check(obs.h, "h");
    check(obs.psi, "psi");
}

}  // namespace hypofk
