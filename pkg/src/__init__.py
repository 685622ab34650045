# make src a package for module-relative imports
