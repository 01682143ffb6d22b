# NetGP Application
