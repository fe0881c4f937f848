#include "entailkg/rng.h"

#include <sstream>

#include "entailkg/errors.h"

namespace entailkg {

std::string Rng::state() const {
    std::ostringstream out;
    out << engine_;
    return out.str();
}

void Rng::restore(const std::string& state) {
    std::istringstream in(state);
    std::mt19937_64 engine;
    in >> engine;
    if (in.fail()) throw FormatError("rng: malformed engine state");
    engine_ = engine;
}

}  // namespace entailkg
