#include "idcm_cli/cli.hpp"

int main(int argc, char** argv) { return idcm::cli::dispatch(argc, argv); }
