# Package initializer for synth.management.commands
