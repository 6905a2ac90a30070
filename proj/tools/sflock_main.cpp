#include <sflock/cli.hpp>

int main(int argc, char **argv) { return sflock::cli_main(argc, argv); }
