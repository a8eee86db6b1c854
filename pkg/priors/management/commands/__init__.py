# Package initializer for priors.management.commands
