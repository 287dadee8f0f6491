"""비동기 DS-CDMA 관측 모델과 Monte-Carlo SAGE 수신기."""
