#pragma once

#include <cstdint>
#include <string>

#include "errors.hpp"
#include "params.hpp"

namespace fedcyte {

/// The only value a client sends to the server: trained parameters and its sample count.
struct ClientUpdate {
    std::string client_id;
    ParamVector params;
    std::int64_t n = 1;

    friend bool operator==(const ClientUpdate&, const ClientUpdate&) = default;
};

} // namespace fedcyte
