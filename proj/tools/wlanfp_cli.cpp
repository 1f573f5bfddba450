#include "cli_app.hpp"

int main(int argc, char** argv) { return wlanfp::cli::run(argc, argv); }
