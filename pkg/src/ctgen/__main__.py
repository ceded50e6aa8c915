from ctgen.cli import entry

entry()
