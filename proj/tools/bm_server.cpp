// SPDX-License-Identifier: Apache-2.0
#include "cli_common.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Matching server (main or shard)"};
  bm::cli::add_serve(app, &app);
  try {
    app.parse(argc, argv);
  } catch (const CLI::RuntimeError& e) {
    return e.get_exit_code();
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  return 0;
}
