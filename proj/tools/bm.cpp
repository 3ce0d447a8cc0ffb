// SPDX-License-Identifier: Apache-2.0
#include "cli_common.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Encrypted 1:N biometric matching toolkit"};
  app.require_subcommand(1);
  bm::cli::add_local(app);
  bm::cli::add_client(app, false);
  bm::cli::add_serve(app, app.add_subcommand("serve", "run a main or shard server"));
  try {
    app.parse(argc, argv);
  } catch (const CLI::RuntimeError& e) {
    return e.get_exit_code();
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  return 0;
}
