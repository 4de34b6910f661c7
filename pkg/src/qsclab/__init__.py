"""Quarter-symmetric connections on warped, twisted and Kasner products."""
