# Hand shadow art: inverse silhouette rendering of articulated hands
