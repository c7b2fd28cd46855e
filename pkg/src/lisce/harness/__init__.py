"""Config-driven experiment runner, SVG charts and the command line."""
