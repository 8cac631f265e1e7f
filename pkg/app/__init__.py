# GaborNet Lab application
