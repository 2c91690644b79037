#include <dyrep/cli.hpp>

int main(int argc, char** argv) { return dyrep::run_cli(argc, argv); }
