// SPDX-License-Identifier: Apache-2.0
//
// Subcommands shared by bm, bm-server and bm-client.
#pragma once

#include <functional>
#include <string>

#include "CLI11.hpp"
#include "bm/cluster/config.hpp"

namespace bm::cli {

// Runs `body`; library errors print "error: ..." and exit 2, anything else 1.
int guarded(const std::function<int()>& body);

// BM_CONFIG, then `path`, then built-in defaults.
cluster::ClusterConfig load_config(const std::string& path);

void add_serve(CLI::App& app, CLI::App* cmd);
void add_client(CLI::App& app, bool prefixed);
void add_local(CLI::App& app);

}  // namespace bm::cli
