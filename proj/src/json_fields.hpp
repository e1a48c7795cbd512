#pragma once

// JSON mappings shared by the config loader and the checkpoint header.

#include <json.hpp>

#include "tmkt/spiking_core.hpp"

namespace tmkt::detail {

nlohmann::json spec_to_json(const snn::NetworkSpec& spec);
snn::NetworkSpec spec_from_json(const nlohmann::json& j, snn::NetworkSpec base = {});

nlohmann::json lif_to_json(const snn::LIFParams& lif);
snn::LIFParams lif_from_json(const nlohmann::json& j, snn::LIFParams base = {});

}  // namespace tmkt::detail
